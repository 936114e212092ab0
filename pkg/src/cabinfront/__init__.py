"""Non-neural front-end for in-car multi-channel speech recognition.

Signal primitives, image-source cabin simulation, guided source separation
(CACGMM + MVDR), AuxIVA, diarization support and the batch pipelines that
tie them together.
"""
from .dsp import (
    AudioBuffer,
    SiSdrBreakdown,
    SpecAugmentPolicy,
    Spectrogram,
    StftConfig,
    istft,
    mix_at_snr,
    si_sdr,
    spec_augment_masks,
    spectral_flatness,
    speed_perturb,
    stft,
)
from .errors import CabinFrontError, ConfigError, DataError, HookError
from .gss import GssConfig, gss_enhance
from .iva import IvaConfig, auxiva, iva_enhance, projection_back
from .rir import RoomSpec, ScenePlacement, cabin_preset, image_source_rir, simulate_scene

__version__ = "0.1.0"
