# api/main.py
"""
FastAPI backend for the GMAC shaping toolkit.
Read-only access to capacities, constellations, design bundles and runs.
"""
import os
import sys
from fastapi import FastAPI, Request, HTTPException
from fastapi.responses import JSONResponse
from fastapi.middleware.cors import CORSMiddleware

# Add parent directory to system path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

# Import from local modules
from api.routes import router
from config import TOOL_VERSION
from gmac.errors import GmacError

# Create FastAPI app
app = FastAPI(
    title="GMAC Shaping API",
    description="Capacities and LDPC designs for the two-user Gaussian MAC",
    version=TOOL_VERSION,
)

# Add CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["GET"],
    allow_headers=["*"],
)

# Include API routes
app.include_router(router, prefix="/api")

# Error handling
@app.exception_handler(HTTPException)
async def http_exception_handler(request: Request, exc: HTTPException):
    return JSONResponse(
        status_code=exc.status_code,
        content={"error": exc.detail},
    )

@app.exception_handler(GmacError)
async def gmac_exception_handler(request: Request, exc: GmacError):
    return JSONResponse(
        status_code=400,
        content={"error": f"{type(exc).__name__}: {exc}"},
    )

@app.exception_handler(Exception)
async def general_exception_handler(request: Request, exc: Exception):
    return JSONResponse(
        status_code=500,
        content={"error": f"Internal server error: {str(exc)}"},
    )

# Health check endpoint
@app.get("/health")
async def health_check():
    return {"status": "ok"}

# Root endpoint with API information
@app.get("/")
async def root():
    return {
        "name": "GMAC Shaping API",
        "version": TOOL_VERSION,
        "endpoints": {
            "/api/capacity": "Sum and per-level capacities (constellation, snr_db)",
            "/api/constellations/{name}": "Named constellation pair (MC, SP, OPT)",
            "/api/designs": "Stored and reference design bundles",
            "/api/designs/{id}": "One design bundle",
            "/api/runs": "Run manifests",
        }
    }

if __name__ == "__main__":
    import uvicorn
    uvicorn.run("api.main:app", host="0.0.0.0", port=8000, reload=True)
