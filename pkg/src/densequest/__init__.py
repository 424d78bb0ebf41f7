"""densequest: rank a pool of dense retrievers by predicted suitability for
an unlabeled document collection, behind a job-queue HTTP service."""

__version__ = "0.1.0"
