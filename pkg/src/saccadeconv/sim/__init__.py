"""Simulated saccadic conversion of static images into event streams."""

from .geometry import (
    SensorModel,
    SensorMotion,
    bilinear_sample,
    camera_angular_velocity,
    image_velocity,
    rotation_matrix,
    warp_coordinates,
)
from .image import FlowSample, IntensityImage, brightness_derivative, flow_sample
from .schedule import (
    Pose,
    SaccadeSchedule,
    ScheduleRangeError,
    Segment,
    custom_schedule,
    saccade_pose,
    three_saccade_schedule,
)
from .simulate import (
    DEFAULT_STEP_US,
    DEFAULT_THRESHOLD,
    ImageSizeError,
    NoiseConfig,
    derive_seed,
    excursion_px,
    sensor_for_image,
    simulate,
    warp_image,
)

__all__ = [
    "SensorModel", "SensorMotion", "bilinear_sample", "camera_angular_velocity",
    "image_velocity", "rotation_matrix", "warp_coordinates",
    "FlowSample", "IntensityImage", "brightness_derivative", "flow_sample",
    "Pose", "SaccadeSchedule", "ScheduleRangeError", "Segment", "custom_schedule",
    "saccade_pose", "three_saccade_schedule",
    "DEFAULT_STEP_US", "DEFAULT_THRESHOLD", "ImageSizeError", "NoiseConfig", "derive_seed",
    "excursion_px", "sensor_for_image", "simulate", "warp_image",
]
