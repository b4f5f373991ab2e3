"""Frozen-encoder embedding exporter for the artemb toolkit.

Turns image directories (plus a label manifest) into EMB1 embedding
stores, and class lists into prompt-bank EMB1 files, using pretrained
vision/text encoders. The toolkit itself is consumed only through its
documented file formats; this package carries its own writer.
"""

from artemb_extract.emb1 import write_emb1, write_labelspaces
from artemb_extract.encoders import load_encoder
from artemb_extract.extract import (
    ExtractionJob,
    extract_image_embeddings,
    extract_prompt_embeddings,
)

__version__ = "0.1.0"

__all__ = [
    "write_emb1",
    "write_labelspaces",
    "load_encoder",
    "ExtractionJob",
    "extract_image_embeddings",
    "extract_prompt_embeddings",
    "__version__",
]
