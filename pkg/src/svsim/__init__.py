"""Short-video multi-video prefetching simulator."""
from .engine import Download, Observation, PlayerView, Session, SessionConfig, Sleep, new_session, run_session
from .scoring import QoeBreakdown, QoeCoefficients, score_session, waste_report
from .traces import (NetworkTrace, RetentionCurve, VideoAsset, bundled_manifest, classify, download_time,
                     generate_synthetic_trace, parse_network_trace, parse_retention_trace, parse_video_trace)

__version__ = "0.1.0"

__all__ = [
    "Download", "Observation", "PlayerView", "Session", "SessionConfig", "Sleep", "new_session", "run_session",
    "QoeBreakdown", "QoeCoefficients", "score_session", "waste_report",
    "NetworkTrace", "RetentionCurve", "VideoAsset", "bundled_manifest", "classify", "download_time",
    "generate_synthetic_trace", "parse_network_trace", "parse_retention_trace", "parse_video_trace",
]
