"""Vocal-tract contour inversion from speech-frame features.

Four feature front-ends (MFCC+deltas, phonemizer posteriors, auto and
expert one-hot alignments) feed a Dense-Dense-BiLSTM-BiLSTM-Dense sequence
regressor trained with Adam under early stopping; evaluation reports
per-articulator RMSE and median error in millimeters with Student's t
significance against a baseline run. A deterministic synthetic corpus
substitutes for the private MRI recordings.
"""

from .corpus import (
    ARTICULATORS,
    AlignmentSegment,
    ContourScaler,
    ContourSequence,
    FrameContours,
    Point2D,
    SequenceRecord,
    SplitAssignment,
    parse_alignment_tsv,
    parse_contour_csv,
    remove_silence,
    split_corpus,
    to_millimeters,
    write_contour_csv,
)
from .dsp import FeatureMatrix, FeatureScaler, MfccConfig, add_deltas, extract_mfcc
from .errors import ContractError, FormatError, VtinvError
from .metrics import EvalReport, aggregate_report, frame_errors, students_t_test
from .net import (
    AdamState,
    ContourRegressor,
    ModelConfig,
    ModelParams,
    TrainConfig,
    TrainHistory,
    adam_step,
    grad_check,
    init_params,
    model_backward,
    model_forward,
    mse_loss,
    predict_contours,
    train_model,
)
from .phonfeat import PhoneInventory, SessionScaler, build_inventory, onehot_encode, softmax_rows
from .synth import ConstantContourPredictor, SynthSpec, generate_corpus, generate_records

__version__ = "0.1.0"
