"""HTTP sidecar serving multilingual sentence embeddings."""

from .app import create_app
from .encoders import (
    DEFAULT_MODEL,
    Encoder,
    EncoderError,
    SentenceTransformerEncoder,
    ToyMultilingualEncoder,
    load_encoder,
)

__version__ = "0.1.0"
