"""renewalkit: renewal sequences of finite-dimensional operators,
polynomial decay of correlations for intermittent interval maps, and
Young-tower return-time models.

Subpackages
-----------
sequences    scalar decay sequences, convolution, rate fitting
operators    operator renewal recursion and spectral data
expansions   asymptotic expansions of T_n with error-rate classes
lsv          Liverani-Saussol-Vaienti map, Ulam method, correlations, CLT
tower        Young towers with prescribed return-time distributions
experiments  named, reproducible experiment drivers (also behind the CLI)
"""

from . import errors
from .sequences import DecaySeq, convolve, exp_fit, rate_fit, synth_tail, tail_sum
from .operators import (
    OperatorSeq,
    SpectralData,
    aperiodicity_check,
    power_law_operator,
    renewal_solve,
    spectral_data,
    tail_projection,
    zero_projection_decay,
)
from .expansions import (
    ExpansionReport,
    error_class,
    expansion_first_order,
    expansion_order,
    series_expansion,
)

__version__ = "0.1.0"
