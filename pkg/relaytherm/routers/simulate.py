# relaytherm/routers/simulate.py
from fastapi import APIRouter

from .. import schemas, workflows
from ..config import settings_override

router = APIRouter(
    prefix="/simulate",
    tags=["Simulation"],
    responses={404: {"description": "Not found"}},
)


@router.post("", response_model=schemas.SimulateResponse)
def simulate(config: schemas.RunConfig):
    """Simulate from `config.initial` (or the alpha plane) over `config.horizon`."""
    with settings_override(**config.tolerances):
        ctx = workflows.build_context(config)
        summary, _ = workflows.simulate_run(ctx)
    return schemas.SimulateResponse(config_hash=ctx.config_hash, summary=summary)
