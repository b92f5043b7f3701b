"""MRFT limit-cycle prediction and manifold-based SOIPTD identification."""

__version__ = "0.1.0"

from .errors import MrftError
from .identify import (
    IdentResult,
    PriorKnowledge,
    TestObservation,
    identify_single_test,
    identify_two_freq,
    monte_carlo,
)
from .lprs import (
    df_predict,
    output_amplitude,
    periodic_output,
    periodic_solution,
    phi,
    solve_limit_cycle,
    solve_limit_cycles,
)
from .manifold import (
    GridSpec,
    Manifold,
    generate_ufm,
    load_manifold,
    save_manifold,
    scale_manifold,
    slice_at_tp,
)
from .mrft import (
    LimitCycle,
    MrftConfig,
    MrftState,
    SignalLog,
    detect_limit_cycle,
    ingest_log,
    mrft_update,
    simulate_mrft,
    write_log,
)
from .plant import (
    SoiptdParams,
    TimeDelayLTI,
    altitude_plant,
    as_soiptd,
    attitude_plant,
    freq_response,
    gain_scale,
    magnitude,
    phase,
    soiptd,
    time_scale,
)
from .stepfit import StepFit, fit_step_response, read_step_log

__all__ = [name for name in dir() if not name.startswith("_") and name not in ("errors",)]
