"""Static background estimation from cluttered image sequences.

Blocks are clustered per location as frames arrive; the background is then
labelled on a Markov random field whose prior favours spectrally smooth
continuations of already labelled neighbours.
"""
from .config import EstimatorConfig
from .errors import (BlockBgError, ConfigError, EstimationError, GeometryError, IngestError,
                     SnapshotError, WriteError)
from .evalkit import (EvalReport, SegmentationScore, age, clustered_error_pixels,
                      error_pixels, evaluate_background, gaussian_segment, median_oracle,
                      similarity)
from .frame_io import (FrameSequence, NodeGrid, load_sequence, tile_blocks, to_greyscale,
                       untile_blocks, write_image)
from .mrf import (BackgroundGrid, GibbsParams, estimate_background, fill_background,
                  icm_refine, initialize_partial, seed_corners, select_label)
from .repset import (NoiseThresholds, Representative, RepresentativeSet, SceneModel,
                     correlation, estimate_noise_threshold, mad)
from .spectral import clique_energy, dct2

__version__ = "0.1.0"
