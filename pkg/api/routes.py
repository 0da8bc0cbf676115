# api/routes.py
"""
API routes for the GMAC shaping toolkit.
"""
import os
from typing import Dict, List, Optional
from fastapi import APIRouter, HTTPException, Query
from pydantic import BaseModel

# Add parent directory to system path
import sys
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import SNR_CONVENTION
from gmac.constellation import (named_constellation, constellations_to_json, pair_capacity,
                                per_level_capacities, gaussian_sum_capacity, snr_to_noise_var)
from utils.storage import StorageManager

# Create router
router = APIRouter()

# Create storage manager
storage_manager = StorageManager()

# Models
class CapacityResponse(BaseModel):
    """Capacity of one constellation pair at one SNR."""
    constellation: str
    snr_db: float
    convention: str
    noise_var: float
    sum_capacity: float
    level_capacities: List[float]
    gaussian_bound: float

class DesignInfo(BaseModel):
    """Design bundle summary."""
    id: str
    constellation: str
    dsnr_db: float
    sum_rate: float
    sum_capacity: float
    created_at: str

class ListDesignsResponse(BaseModel):
    designs: List[DesignInfo]

class ListRunsResponse(BaseModel):
    runs: List[Dict]

# Routes
@router.get("/capacity", response_model=CapacityResponse)
async def capacity(constellation: str = Query("MC"), snr_db: float = Query(10.0),
                   convention: Optional[str] = Query(None)):
    """Sum and per-level capacities of a named constellation pair."""
    convention = convention or SNR_CONVENTION
    c1, c2 = named_constellation(constellation)
    noise_var = snr_to_noise_var(snr_db, convention)
    return CapacityResponse(
        constellation=constellation.upper(),
        snr_db=snr_db,
        convention=convention,
        noise_var=noise_var,
        sum_capacity=pair_capacity(c1, c2, noise_var),
        level_capacities=per_level_capacities(c1, c2, noise_var),
        gaussian_bound=gaussian_sum_capacity(noise_var),
    )

@router.get("/constellations/{name}")
async def get_constellation(name: str):
    """Points of a named constellation pair."""
    c1, c2 = named_constellation(name)
    return {"name": name.upper(), **constellations_to_json(c1, c2)}

@router.get("/designs", response_model=ListDesignsResponse)
async def list_designs():
    """List stored and reference design bundles."""
    docs = storage_manager.list_designs()
    return ListDesignsResponse(designs=[DesignInfo(**doc) for doc in docs])

@router.get("/designs/{design_id}")
async def get_design(design_id: str):
    """One design bundle with its codes and capacities."""
    bundle = storage_manager.load_design(design_id)
    if bundle is None:
        raise HTTPException(status_code=404, detail=f"Design with ID {design_id} not found")
    return bundle.model_dump(mode="json", by_alias=True)

@router.get("/runs", response_model=ListRunsResponse)
async def list_runs():
    """Manifests of the runs under the runs directory, newest first."""
    return ListRunsResponse(runs=storage_manager.list_runs())
