"""
Quadratic Kernel AMP - HTTP API
FastAPI application exposing kernel expansion, spectral analysis and solvers
"""
import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from app.config import configure_logging, settings
from app.routes import kernel, solvers, spectrum
from app.schemas import SolverName


logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """
    Lifespan events - startup and shutdown
    """
    configure_logging()
    logger.info("Starting %s %s", settings.APP_NAME, settings.APP_VERSION)

    yield

    logger.info("Shutting down %s", settings.APP_NAME)


app = FastAPI(
    title=settings.APP_NAME,
    version=settings.APP_VERSION,
    description="Nonlinear function estimation with a quadratic kernel and approximate message passing",
    docs_url="/docs",
    redoc_url="/redoc",
    lifespan=lifespan
)


app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.cors_origins_list,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


app.include_router(kernel.router, prefix="/api")
app.include_router(spectrum.router, prefix="/api")
app.include_router(solvers.router, prefix="/api")


@app.get("/")
async def root():
    """Root endpoint - API health check"""
    return {
        "name": settings.APP_NAME,
        "version": settings.APP_VERSION,
        "status": "healthy",
        "docs": "/docs"
    }


@app.get("/health")
async def health_check():
    """Detailed health check"""
    return {
        "status": "healthy",
        "solvers": [solver.value for solver in SolverName],
        "workers": settings.WORKERS
    }
