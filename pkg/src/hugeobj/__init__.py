"""Learning models of huge objects that can be sampled per seed and stay truthful."""
from .auditors import AuditorParams, audit_sample_access, audit_support_access
from .distinguishers import Distinguisher, gap_report
from .fixed_weight import fixed_weight_impl, learn_fixed_weight
from .multiaccuracy import CappedPredictor, learn_multiaccurate
from .objects import AccessView, DomainSpec, FunctionSpec, GraphSpec, ImplementationHandle, to_ordinary
from .oracle import KeyedOracle, LazyRandomOracle, OracleSeed

__version__ = "0.1.0"
