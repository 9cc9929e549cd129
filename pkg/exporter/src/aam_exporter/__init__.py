"""AAM1 cross-attention exporter for encoder-decoder AMR parsers."""

from .container import manifest_dict, write_bundle
from .export import ExportJob, SentenceReport, export
from .linearize import linearize_penman, read_blocks

__version__ = "0.1.0"
