"""Multi-object association used to keep the target apart from similar objects."""
from .kalman import KalmanFilter, KalmanState, kalman_predict, kalman_update, xyah_to_xyxy, xyxy_to_xyah
from .matching import Assignment, box_iou, embed_distance, embedding_distance_matrix, hungarian, iou_matrix
from .tracker import (AssociationConfig, AssociationResult, TargetOutput, Tracker, Tracklet,
                      TrackStatus, associate)

__all__ = [
    "KalmanFilter", "KalmanState", "kalman_predict", "kalman_update", "xyah_to_xyxy", "xyxy_to_xyah",
    "Assignment", "box_iou", "embed_distance", "embedding_distance_matrix", "hungarian", "iou_matrix",
    "AssociationConfig", "AssociationResult", "TargetOutput", "Tracker", "Tracklet", "TrackStatus",
    "associate",
]
