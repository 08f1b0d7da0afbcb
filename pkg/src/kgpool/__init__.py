"""Sentential relation extraction with pooled knowledge-graph context."""

from kgpool.config import Config
from kgpool.errors import CompatibilityError, ConfigError, EncodingError, KGPoolError, ParseError
from kgpool.graph import EntityAttributes, EntityMention, SentenceInstance
from kgpool.kernels import BACKEND
from kgpool.model import KGPoolModel, load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CompatibilityError",
    "Config",
    "ConfigError",
    "EncodingError",
    "EntityAttributes",
    "EntityMention",
    "KGPoolError",
    "KGPoolModel",
    "ParseError",
    "SentenceInstance",
    "load_checkpoint",
    "save_checkpoint",
]
