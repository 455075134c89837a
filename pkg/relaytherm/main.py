# relaytherm/main.py
import structlog
from fastapi import FastAPI, Request, status
from fastapi.responses import JSONResponse
from pydantic import ValidationError

from . import __version__
from .config import get_settings
from .core.errors import ConfigurationError, NumericalError, UsageError
from .core.logging import setup_logging
from .routers import bifurcation, health, periodic, simulate, stability

settings = get_settings()
setup_logging(settings.log_level, settings.log_format)
logger = structlog.get_logger(__name__)

app = FastAPI(title=settings.app_name, version=__version__)


@app.exception_handler(ConfigurationError)
@app.exception_handler(UsageError)
async def configuration_error_handler(request: Request, exc: Exception):
    return JSONResponse(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, content={"detail": str(exc)})


@app.exception_handler(ValidationError)
async def settings_validation_handler(request: Request, exc: ValidationError):
    return JSONResponse(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, content={"detail": exc.errors(include_url=False)})


@app.exception_handler(NumericalError)
async def numerical_error_handler(request: Request, exc: NumericalError):
    logger.warning("numerical_failure", path=request.url.path, error=type(exc).__name__, detail=str(exc))
    return JSONResponse(
        status_code=status.HTTP_409_CONFLICT,
        content={"detail": str(exc), "error": type(exc).__name__},
    )


app.include_router(health.router, prefix="/api/v1")
app.include_router(simulate.router, prefix="/api/v1")
app.include_router(periodic.router, prefix="/api/v1")
app.include_router(bifurcation.router, prefix="/api/v1")
app.include_router(stability.router, prefix="/api/v1")
