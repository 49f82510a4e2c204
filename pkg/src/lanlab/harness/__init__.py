"""Configuration, orchestration, persistence and the ``lanlab`` command line."""
from .streams import derive_stream, derive_streams, splitmix64, stream_key

__all__ = ["derive_stream", "derive_streams", "splitmix64", "stream_key"]
