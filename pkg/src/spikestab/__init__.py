"""Spike camera simulation, stability analysis and parameter-free reconstruction."""

from .codec import EncodedRecord, MalformedStreamError, decode, encode, encode_runs, encode_segments
from .core import (
    BoundsError,
    IntensityImage,
    IntervalStream,
    Segment,
    SpikeLikeStream,
    SpikeStabError,
    SpikeVolume,
    ValidationError,
    pixel_stream,
    quantize,
)
from .io import FormatError, GeometryError, LengthError, read_raw, read_spk, read_spkr, write_image, write_spk, write_spkr
from .metrics import MetricReport, bench, mse, psnr, two_dimensional_entropy
from .reconstruct import (
    ReconMethod,
    StreamingReconstructor,
    flush,
    pixel_records,
    push_frame,
    reconstruct,
    segment_fsr,
    segment_ssr,
)
from .scenes import ConstantScene, MovingBarScene, RotatingWedgeScene, StepScene
from .simulator import NoiseSpec, ideal_intensity, simulate_pixel, simulate_scene
from .stability import (
    interval_stream,
    is_zero_order_stable,
    lemma1_interval_bounds,
    lemma2_params,
    stability_order,
    verify_lemma2,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
