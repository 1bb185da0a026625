"""Simulation engines: discrete, continuous clock, star-clock coupling, megastar process."""

from .continuous import run_continuous
from .discrete import DEFAULT_MAX_STEPS, discrete_step, run_star_lumped, run_to_absorption
from .megastar import (
    CliqueJumps,
    DominationRun,
    MegastarState,
    apply_clock,
    collect_clique_jumps,
    coupled_domination_run,
    megastar_step,
)
from .starclock import TriggerLedger, check_observation, star_clock_coupled_run
from .state import (
    CENSORED,
    EXTINCTION,
    FIXATION,
    Event,
    EventLog,
    LocalTimeReplay,
    LocalTimes,
    MutantState,
    Outcome,
    local_times,
    resolve_initial,
)

__all__ = [
    "CENSORED", "EXTINCTION", "FIXATION", "DEFAULT_MAX_STEPS",
    "CliqueJumps", "DominationRun", "Event", "EventLog", "LocalTimeReplay", "LocalTimes",
    "MegastarState", "MutantState", "Outcome", "TriggerLedger",
    "apply_clock", "check_observation", "collect_clique_jumps", "coupled_domination_run",
    "discrete_step", "local_times", "megastar_step", "resolve_initial", "run_continuous",
    "run_star_lumped", "run_to_absorption", "star_clock_coupled_run",
]
