"""Requester-anonymous peer-to-peer relaying over dual paths.

A requester reaches a provider through one randomly drawn relay path and
receives the response over a second, disjoint one; layered sealing keeps
every relay limited to its immediate successor. The package bundles the
envelope construction, the supernode membership directory, the per-peer
protocol machines, a deterministic network simulator with churn, and an
adversary analysis that measures what colluders and a global observer can
actually link.
"""

from .analysis import linkability_analysis
from .config import ConfigError, ScenarioConfig, parse_config
from .directory import Directory, MembershipDelta, PeerRecord, merge_directories
from .envelope import (KeyHandle, KeyTable, Packet, PlainPayload,
                       ResponseBlock, SealedBlob, build_request_onion,
                       build_response_block, open_blob, open_response_block,
                       peel_layer, seal, select_scheme, wrap_response)
from .node import DualPath, PeerNode, RotationPolicy, Session, SupernodeNode, select_dual_path
from .simnet import LinkEvent, Metrics, Trace, World, compute_metrics, run_scenario

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "Directory", "DualPath", "KeyHandle", "KeyTable",
    "LinkEvent", "MembershipDelta", "Metrics", "Packet", "PeerNode",
    "PeerRecord", "PlainPayload", "ResponseBlock", "RotationPolicy",
    "ScenarioConfig", "SealedBlob", "Session", "SupernodeNode", "Trace",
    "World", "build_request_onion", "build_response_block",
    "compute_metrics", "linkability_analysis", "merge_directories",
    "open_blob", "open_response_block", "parse_config", "peel_layer",
    "run_scenario", "seal", "select_dual_path", "select_scheme",
    "wrap_response",
]
