"""Positivity of kernels, completely positive maps and operator multipliers at finite dimension."""
from .algebra import VNAlg, commutant
from .cpmap import ChoiMatrix, KrausFamily, SuperOp, apply_cp, choi, kraus_from_choi, minimalize
from .errors import PosmultError
from .matcore import herm_eig, pivoted_cholesky, psd_check
from .schurmult import GramRep, Kernel, WeightedPointSet, representing_vectors
from .stinelift import Filtration, lift_minimal_kraus, nested_kraus

__version__ = "0.1.0"
