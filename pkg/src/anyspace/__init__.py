"""Exact inference by recursive conditioning with any-space caching."""

from .dtree import Dtree, compute_sets, dtree_width, el2dt, el2sdt, order_width, validate_map_dtree
from .mapmpe import HypothesisSet, rc_map, rc_mpe, update_evidence
from .model import Factor, FactorSet, Variable, make_factor
from .netio import parse_evidence, parse_network, parse_order, serialize_network
from .rc import CacheFactor, Session, predicted_calls, rc_query, rc_query_forgetting, retrieval_count
from .ve import memory_report, ve_prob

__version__ = "0.1.0"
