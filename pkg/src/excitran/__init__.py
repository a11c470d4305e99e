"""Exciton transport on chromophore networks under pure dephasing."""

__version__ = "0.1.0"

from ._kernels import BACKEND as kernel_backend
from .errors import (
    ConfigError,
    ExcitranError,
    FitConvergenceError,
    GeneratorNotInvertibleError,
    GraphFormatError,
    HorizonError,
    StiffnessError,
)
from .liouvillian import (
    LindbladModel,
    SuperOperator,
    TrapSpec,
    apply_generator,
    build_superoperator,
    propagate,
    resolvent_solve,
)
from .model import (
    DisorderSpec,
    OligomerSpec,
    SiteGraph,
    SiteMeta,
    assemble_oligomer,
    load_site_graph,
    sample_disorder,
    spectrum,
)
from .observables import (
    Partition,
    TimescaleFit,
    band_populations,
    concurrence,
    delocalization,
    fit_timescales,
    mutual_information,
    negativity,
    populations,
    reduced_state,
)
from .transport import (
    BathSpec,
    InitialState,
    ScenarioConfig,
    SweepResult,
    TransportResult,
    build_scenario_model,
    dephasing_from_temperature,
    dephasing_sweep,
    disorder_average,
    efficiency_quadrature,
    efficiency_resolvent,
    scenario_run,
)

__all__ = [
    "kernel_backend",
    "ExcitranError", "GraphFormatError", "ConfigError",
    "GeneratorNotInvertibleError", "StiffnessError", "HorizonError",
    "FitConvergenceError",
    "SiteMeta", "SiteGraph", "OligomerSpec", "DisorderSpec",
    "load_site_graph", "assemble_oligomer", "spectrum", "sample_disorder",
    "TrapSpec", "LindbladModel", "SuperOperator",
    "apply_generator", "build_superoperator", "propagate", "resolvent_solve",
    "Partition", "TimescaleFit",
    "populations", "delocalization", "reduced_state", "mutual_information",
    "negativity", "concurrence", "band_populations", "fit_timescales",
    "BathSpec", "InitialState", "ScenarioConfig", "TransportResult", "SweepResult",
    "dephasing_from_temperature", "efficiency_resolvent", "efficiency_quadrature",
    "dephasing_sweep", "disorder_average", "scenario_run", "build_scenario_model",
]
