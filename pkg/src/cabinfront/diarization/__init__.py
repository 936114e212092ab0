"""Diarization support: RTTM I/O, VAD, clustering, scoring, refinement."""
from .cluster import EmbeddingSet, read_embeddings, spectral_cluster, write_embeddings
from .der import DerReport, der
from .refine import quantize_inward, refine_rttm
from .rttm import Segment, by_recording, parse_rttm, read_rttm, serialize_rttm, speech_time
from .vad import VadConfig, energy_vad
