"""Delay of retransmission versus random linear coding ARQ on a slotted erasure channel."""

from .analytics import (
    BulkDistribution,
    ChannelParams,
    DelayReport,
    StationaryBoundary,
    bulk_distribution,
    delay_finite_lower,
    delay_infinite_exact,
    delay_littles_approx,
    delay_ratio_bound,
    delay_report,
    denominator_roots,
    mean_queue_at_departure,
    queue_distribution,
    queue_pgf_eval,
    retransmission_delay,
    stability_threshold,
    stationary_boundary,
)
from .errors import *  # noqa: F401,F403
from .gf import BAD, GOOD, INFINITE, GaloisField, RankState, field_make, rank_update, sample_coefficients
from .service import (
    ServiceTimeModel,
    build_model,
    model_family,
    moments,
    pgf_eval,
    sample_service_time,
    useful_probability,
)
from .simulator import (
    RANK_MARKOV,
    RETRANSMISSION,
    RLC,
    VECTOR_EXACT,
    ProtocolConfig,
    SimConfig,
    SimStats,
    coupled_run,
    empirical_departure_distribution,
    simulate,
)

__version__ = "0.1.0"
