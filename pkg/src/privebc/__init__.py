"""Differentially private two-party egocentric betweenness centrality.

Two data holders split a graph's nodes; each sees its own internal
edges plus the shared cross edges. The protocol lets party X estimate
the egocentric betweenness of one of its nodes with edge differential
privacy against the other party: X releases a perturbed neighbour set
via an exact exponential-mechanism sampler, Y answers with Laplace
noised 2-path counts and a noised partial sum, and X assembles the
estimate. See README.md for the CLI and experiment harness.
"""

from .backward import BackwardMsg, DegenerateEgoError, backward_message, partial_ebc_y, spanning_counts
from .dpnum import (
    DEFAULT_CONTEXT,
    PrecisionContext,
    PrivacyParams,
    log_add,
    sample_laplace,
    sample_neg_exp1,
)
from .forward import (
    ForwardMsg,
    StratumDistribution,
    forward_message,
    inverse_transform_sample,
    pick_and_flip,
    quality,
    stratum_distribution,
)
from .graphs import (
    EgoContext,
    Graph,
    GraphParseError,
    LoadReport,
    PartitionedGraph,
    PartyView,
    UnknownNodeError,
    WrongPartyError,
    ego_context,
    exact_ebc,
    load_edge_list,
    partition_nodes,
    two_path_count,
)
from .protocol import (
    ALL_MECHS,
    BudgetLedger,
    DecodeError,
    EbcAccumulator,
    HandshakeError,
    ProtocolConfig,
    ProtocolError,
    SessionResult,
    decode_msg,
    encode_msg,
    nonprivate_ebc_protocol,
    private_ebc,
    run_session,
    run_two_process,
)

__version__ = "0.1.0"

__all__ = [
    "ALL_MECHS",
    "BackwardMsg",
    "BudgetLedger",
    "DEFAULT_CONTEXT",
    "DecodeError",
    "DegenerateEgoError",
    "EbcAccumulator",
    "EgoContext",
    "ForwardMsg",
    "Graph",
    "GraphParseError",
    "HandshakeError",
    "LoadReport",
    "PartitionedGraph",
    "PartyView",
    "PrecisionContext",
    "PrivacyParams",
    "ProtocolConfig",
    "ProtocolError",
    "SessionResult",
    "StratumDistribution",
    "UnknownNodeError",
    "WrongPartyError",
    "backward_message",
    "decode_msg",
    "ego_context",
    "encode_msg",
    "exact_ebc",
    "forward_message",
    "inverse_transform_sample",
    "load_edge_list",
    "log_add",
    "nonprivate_ebc_protocol",
    "partial_ebc_y",
    "partition_nodes",
    "pick_and_flip",
    "private_ebc",
    "quality",
    "run_session",
    "run_two_process",
    "sample_laplace",
    "sample_neg_exp1",
    "spanning_counts",
    "stratum_distribution",
    "two_path_count",
    "__version__",
]
