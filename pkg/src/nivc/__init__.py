"""Block-based intra image codec with a learned in-loop filter, a neural
prediction mode, and the training/evaluation machinery around them."""

from .codec import (
    Bitstream,
    CodecConfig,
    QuantParams,
    decode_frame,
    encode_frame,
)
from .errors import (
    CorruptStreamError,
    ImageFormatError,
    MissingModelError,
    NumericalError,
    ShapeMismatchError,
    TrainingDivergedError,
    WeightFileError,
)
from .evaluation import RDCurve, RDPoint, bd_psnr, bd_rate, bits_per_pixel, psnr
from .graphs import (
    ModelBank,
    NetworkGraph,
    WeightStore,
    build_arcnn,
    build_fc_predictor,
    build_inception_filter,
    build_vrcnn,
    count_parameters,
    forward,
    graph_from_tag,
    load_weights,
    make_model_bank,
    save_weights,
    select_model,
)
from .imageio import Frame, Plane, frame_from_luma, read_pgm, read_yuv420, write_pgm, write_yuv420
from .training import (
    PatchPair,
    TrainConfig,
    adam_step,
    build_model_bank,
    make_filter_dataset,
    mse_loss,
    train_fc_predictor,
    train_filter,
)

__version__ = "0.1.0"
