"""Empowerment: channel capacity from an agent's actions to its later sensor readings."""
from .continuous import (
    GaussianActionModel,
    InfiniteCapacityError,
    LinearGaussianChannel,
    MCParams,
    mc_empowerment,
    qlg_empowerment,
    water_filling,
    whiten,
)
from .core import (
    ContextPartition,
    EmpowermentCalculator,
    EmpowermentMap,
    HorizonTooLargeError,
    SolverParams,
    average_state_empowerment,
    context_free_empowerment,
    contextual_empowerment,
    deterministic_empowerment,
    expected_empowerment,
    greedy_policy_step,
    impoverished_empowerment,
    optimal_context_search,
    sequence_channel,
    state_empowerment,
)
from .gridworld import (
    GridAction,
    GridWorld,
    as_transition_model,
    average_distance_map,
    box_world,
    correlation_report,
    empowerment_map,
    generate_maze,
)
from .infotheory import (
    ValidationError,
    blahut_arimoto,
    conditional_entropy,
    entropy,
    mutual_information,
)
from .model import TransitionModel
from .pendulum import (
    PendulumParams,
    PendulumState,
    dynamics_step,
    greedy_control,
    local_linearization,
    pendulum_empowerment_map,
)

__all__ = [name for name in dir() if not name.startswith("_")]
