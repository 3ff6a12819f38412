"""Clock transitions of donor spins in silicon.

Exact diagonalization of the electron-nuclear spin Hamiltonian, transition
frequencies and their field/hyperfine derivatives, clock-transition search,
field-swept ESR spectra and a phenomenological decoherence model.
"""

__version__ = "0.1.0"

from .spin_core import (
    PRESETS,
    BranchTrackingError,
    EigenSolution,
    EigensolverError,
    LabelError,
    SpinOperators,
    SpinSystem,
    StateLabel,
    Sweep,
    breit_rabi_levels,
    build_operators,
    get_system,
    hamiltonian,
    label_states,
    solve,
    sweep,
    zero_field_basis,
)
from .transitions import (
    ESR,
    NMR,
    StepSizeError,
    Transition,
    all_transitions,
    branch_function,
    classify,
    d2fdB2,
    dfdA,
    dfdB,
    find_transition,
    second_derivative,
    selection,
)
from .clock_finder import (
    ClockSite,
    ClockTransition,
    RefinementError,
    find_all_cts,
    group_doublets,
    refine_ct,
    scan_and_bracket,
)
from .spectra import (
    LinewidthModel,
    Spectrum,
    effective_linewidth,
    field_sweep,
    lineshape,
    peak_width_field_domain,
)
from .decoherence import (
    EXAMPLE_MODEL,
    ConvergenceError,
    DecoherenceModel,
    FitError,
    fit_echo_decay,
    fit_t2_model,
    inv_t2,
    simulate_echo_decay,
    t2,
)
