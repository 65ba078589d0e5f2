"""FastAPI service wrapping the pipeline stages.

Each stage is a POST endpoint taking a StageRequest. Errors surface as JSON
bodies carrying the exit code the CLI client maps onto its process status:
2 config, 3 data/format, 4 numerical.
"""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..config import apply_overrides, load_config, parse_config
from ..errors import EmbalignError
from ..pipeline import STAGES
from .schemas import HealthResponse, StageRequest, StageResponse

_STATUS_BY_EXIT = {2: 400, 3: 422, 4: 500}


def create_app() -> FastAPI:
    app = FastAPI(title="embalign", version=__version__)

    @app.exception_handler(EmbalignError)
    async def _embalign_error(_, exc: EmbalignError):
        return JSONResponse(
            status_code=_STATUS_BY_EXIT.get(exc.exit_code, 500),
            content={"message": str(exc), "exit_code": exc.exit_code},
        )

    @app.get("/v1/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    def make_endpoint(stage_name, runner):
        def endpoint(req: StageRequest) -> StageResponse:
            if req.config_path is not None:
                cfg = load_config(req.config_path)
            else:
                cfg = parse_config(req.config_text)
            cfg = apply_overrides(cfg, seed=req.seed, out_dir=req.out_dir)
            result = runner(cfg)
            return StageResponse(stage=result.stage, outputs=result.outputs,
                                 manifest_path=result.manifest_path,
                                 elapsed_s=result.elapsed_s)
        endpoint.__name__ = f"run_{stage_name}"
        return endpoint

    for name, runner in STAGES.items():
        app.post(f"/v1/{name}", response_model=StageResponse)(make_endpoint(name, runner))

    return app


app = create_app()
