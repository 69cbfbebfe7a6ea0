"""Dataset construction: poses, maps, sub-maps, tuple mining, augmentation, synthetic worlds."""

from .augment import AugmentParams, augment_image, roll_yaw
from .io import (ManifestEntry, load_image, read_manifest, read_scan, save_image, write_manifest,
                 write_scan)
from .maps import (DegenerateLocationError, GlobalMap, Submap, build_global_map, cut_submap,
                   ransac_plane, remove_ground, to_local, voxel_thin)
from .mining import TrainingTuple, mine_training_tuples, select_spaced
from .poses import Pose, PoseFormatError, load_poses, write_poses
from .synth import SamplePair, SyntheticWorld, make_world, pairs_from_world, synth_scene

__all__ = [
    "AugmentParams", "augment_image", "roll_yaw",
    "ManifestEntry", "load_image", "read_manifest", "read_scan", "save_image", "write_manifest",
    "write_scan",
    "DegenerateLocationError", "GlobalMap", "Submap", "build_global_map", "cut_submap",
    "ransac_plane", "remove_ground", "to_local", "voxel_thin",
    "TrainingTuple", "mine_training_tuples", "select_spaced",
    "Pose", "PoseFormatError", "load_poses", "write_poses",
    "SamplePair", "SyntheticWorld", "make_world", "pairs_from_world", "synth_scene",
]
