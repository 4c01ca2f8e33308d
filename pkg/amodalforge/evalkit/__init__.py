from amodalforge.evalkit.detections import Detection, GroundTruth, ground_truth_from_record, load_detections, save_detections, perturb_gt_to_detections, SCORE_MODELS
from amodalforge.evalkit.metrics import APConfig, APReport, MatchResult, iou, box_iou, box_iou_matrix, mask_iou_matrix, iou_matrix, greedy_match, average_precision, evaluate_ap, group_of, DEFAULT_THRESHOLDS, GROUPINGS, TARGETS
from amodalforge.evalkit.nms import nms, nms_per_image, collapse_layers, NMS_MODES
