# relaytherm/routers/bifurcation.py
from fastapi import APIRouter

from .. import schemas, workflows
from ..config import settings_override

router = APIRouter(
    prefix="/bifurcation",
    tags=["Bifurcations"],
    responses={404: {"description": "Not found"}},
)


@router.post("/scan", response_model=schemas.BifurcationResponse)
def scan(config: schemas.RunConfig):
    with settings_override(**config.tolerances):
        ctx = workflows.build_context(config)
        rows, points, sigma, counts = workflows.bifurcate_run(ctx)
    return schemas.BifurcationResponse(
        config_hash=ctx.config_hash, rows=rows, points=points, sigma=sigma, counts=counts
    )
