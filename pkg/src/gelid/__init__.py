"""gelid: mine gameplay-video derivatives for issue reports.

Pipeline: parse subtitles and frame descriptors, segment each video at
shifted-and-snapped shot transitions, classify segments into five issue
labels, group informative segments by visual context, cluster each group by
specific issue, and emit a browsable hierarchy. A statistics module covers
the evaluation toolkit (MoJoFM, Mann-Whitney, Cliff's delta, BH correction,
margins of error, power simulation).
"""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, GelidError, InternalError

__all__ = ["ConfigError", "DataError", "GelidError", "InternalError",
           "__version__"]
