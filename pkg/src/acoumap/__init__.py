"""Acoustic map imaging simulator and super-resolution benchmark toolkit."""

from .beamform import (
    BeamOutput,
    DelayMode,
    SrpConfig,
    SrpMap,
    acoustic_heatmap,
    das_beamform,
    polar_response,
    steered_power,
    waterfall_response,
)
from .dataset import (
    DatasetConfig,
    DatasetManifest,
    ManifestEntry,
    generate_manifest,
    render_dataset,
    split_test_kde,
)
from .errors import (
    DegenerateRangeError,
    ParameterError,
    SchemaError,
    WindowingError,
)
from .geometry import (
    DelayDecomposition,
    DelayTable,
    Microphone,
    MicrophoneArray,
    SteeringGrid,
    SteeringVector,
    build_delay_table,
    build_steering_grid,
    build_umap_array,
    delay_decomposition,
    delay_index,
    load_array,
)
from .imaging import (
    AcousticImage,
    GrayImage,
    decode_png,
    encode_png,
    normalize_minmax,
    row_profile,
)
from .srtools import (
    MetricResult,
    bicubic_resize,
    gaussian_blur,
    psnr,
    ssim,
)
from .synthesis import (
    FilterChainConfig,
    MicCapture,
    Scene,
    SoundSource,
    cic_decimate,
    demodulation_chain,
    fir_decimate,
    sigma_delta_modulate,
    synthesize_scene,
)

__version__ = "0.1.0"
