"""Quasi-static crawler on granular media.

The rollout kernel is chosen in :mod:`.backend`.
"""

from .backend import BACKEND, simulate
from .model import (FIN_LABELS, JOINT_NAMES, MEDIA_NAMES, Calibration, CrawlerEnv, CrawlerSim, CrawlerState, FinShape,
                    MediaParams, ModelConstants, StepResult, Trajectory, git_blob_hash, load_calibration,
                    preset_fin, preset_media, reset, rollout, simulate_rollout, step)

__all__ = ["BACKEND", "simulate", "FIN_LABELS", "JOINT_NAMES", "MEDIA_NAMES", "git_blob_hash", "Calibration", "CrawlerEnv", "CrawlerSim", "CrawlerState",
           "FinShape", "MediaParams", "ModelConstants", "StepResult", "Trajectory",
           "load_calibration", "preset_fin", "preset_media", "reset", "rollout",
           "simulate_rollout", "step"]
