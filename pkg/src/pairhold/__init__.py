"""Human-firearm pair association, carrier classification and AP_hold evaluation."""

from .geometry import Box, InvalidGeometryError, Keypoint, contains, enclosure, iou, resize_long_side, union_box
from .records import (DatasetError, FirearmDetection, GroundTruthPair, HumanDetection, ImageRecord,
                      PairPrediction, PoseEstimate, Violation, load_dataset, load_predictions,
                      save_dataset, save_predictions, validate_record)
from .pairing import CandidatePair, crop_spec, enumerate_pairs
from .baselines import (BcfdConfig, HifbConfig, OhfbConfig, bcfd_classify, hifb_classify,
                        ohfb_associate)
from .aap import adaptive_avg_pool
from .classifier import (ClassProbs, GeomPairModel, TrainConfig, cross_entropy, extract_features,
                         hfpd_predict, score_pair, softmax, train)
from .evaluation import EvalReport, average_precision, classification_accuracy, evaluate, match_pairs

__version__ = "0.1.0"
