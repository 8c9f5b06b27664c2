"""Learning-automata game dynamics: simulation, closed forms, and
stochastic-stability estimation for finite games with noisy payoffs."""

from .analysis import (
    ClosedFormInputs,
    ConstantActionRun,
    PureStrategyState,
    aspiration_envelope,
    aspiration_envelope_path,
    closed_form_strategy,
    closed_form_strategy_path,
    constant_action_run,
    enumerate_pss,
    in_neighborhood,
    nearest_pss,
    pure_strategy_state,
)
from .dynamics import (
    MODE_APLA,
    MODE_PLA,
    Engine,
    LearnerParams,
    Recorder,
    SimState,
    Trajectory,
    aspiration_factor,
    aspiration_update,
    initial_state,
    run,
    sample_action,
    step,
    strategy_update,
)
from .games import (
    GameSpec,
    NoiseModel,
    ValidationReport,
    builtin,
    load_game,
    measure_utility,
    prisoners_dilemma,
    save_game,
    stag_hunt,
    typewriter,
    validate_hypotheses,
)
from .rng import StreamSet, UniformStream, derive_generator, derive_seed
from .stability import (
    EmpiricalChain,
    EstimationQualityError,
    OccupancyEstimate,
    ReducibleChainError,
    StationaryDistribution,
    SweepResult,
    estimate_chain,
    estimate_chain_row,
    estimate_occupancy,
    stationary,
    sweep_lambda,
    total_variation,
    tremble_once,
)

__version__ = "0.1.0"
