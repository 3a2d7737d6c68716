"""Legal retrieval-and-routing engine.

Retrieval over a document index fused with knowledge-graph similarity,
sparse expert routing behind a trainable gate, a role-based review
workflow, and a human-feedback loop that updates the routing policy.
"""

from .embedding import HashEmbedder, cosine, embed, normalize
from .engine import LegalEngine
from .errors import LexragError

__version__ = "0.1.0"

__all__ = [
    "HashEmbedder",
    "LegalEngine",
    "LexragError",
    "cosine",
    "embed",
    "normalize",
    "__version__",
]
