# relaytherm/routers/stability.py
from fastapi import APIRouter

from .. import schemas, workflows
from ..config import settings_override

router = APIRouter(
    prefix="/stability",
    tags=["Stability"],
    responses={404: {"description": "Not found"}},
)


@router.post("", response_model=schemas.StabilityResponse)
def stability_report(config: schemas.RunConfig):
    with settings_override(**config.tolerances):
        ctx = workflows.build_context(config)
        records, criteria = workflows.stability_run(ctx)
    return schemas.StabilityResponse(config_hash=ctx.config_hash, solutions=records, small_s=criteria)
