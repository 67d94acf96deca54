"""foramslice: micro-CT slice analysis toolkit.

Volume ingestion, slice preprocessing and curation, similarity metrics,
two-stage 3D slice matching, classifier ensembles, evaluation metrics,
and an HTTP service front end.
"""

__version__ = "0.1.0"
