# relaytherm/routers/periodic.py
from fastapi import APIRouter

from .. import schemas, workflows
from ..config import settings_override

router = APIRouter(
    prefix="/periodic",
    tags=["Periodic Solutions"],
    responses={404: {"description": "Not found"}},
)


@router.post("", response_model=schemas.PeriodicResponse)
def enumerate_solutions(config: schemas.RunConfig):
    with settings_override(**config.tolerances):
        ctx = workflows.build_context(config)
        records = workflows.periodic_run(ctx)
    n_valid = sum(1 for r in records if r.valid)
    return schemas.PeriodicResponse(
        config_hash=ctx.config_hash, n_valid=n_valid, n_ghost=len(records) - n_valid, solutions=records
    )
