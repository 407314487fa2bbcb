"""Choi-matrix calculus and membership oracles for cones of positive maps."""

__version__ = "0.1.0"

from .matcore import (  # noqa: E402
    Tolerance,
    Verdict,
    VerdictState,
    conj_J,
    hs_pair,
    is_block_positive,
    is_psd,
    partial_transpose,
    tensor,
)
from .maps import (  # noqa: E402
    QuantumMap,
    StateFunctional,
    ad_v,
    adjoint,
    apply,
    compose,
    functional_of_map,
    kraus,
    map_from_action,
    map_of_functional,
    pi_contract,
    t_conjugate,
)
from .cones import (  # noqa: E402
    Cone,
    SampledCone,
    dual_cone,
    dual_membership_sampled,
    k_sharp_membership,
    membership,
    pairing,
    sample_PBK,
)
from .states import (  # noqa: E402
    gen_random,
    in_cone_C,
    is_ppt_state,
    is_separable,
    theorem10_check,
    theorem11_check,
    werner,
)
