"""Configuration files, dataset formats and the frame stream."""

from .config import (
    ConfigError,
    ScenarioConfig,
    SensorSpec,
    default_sensors,
    dumps,
    load_configs,
    load_scenario,
    load_sensor,
    parse_dataclass,
    parse_sensor,
    sensor_to_dict,
    to_dict,
)
from .dataset import DatasetWriter, dataset_messages, load_lidar_frames, read_manifest, tree_digest, verify
from .formats import (
    read_imu,
    read_pointcloud_kitti,
    read_poses,
    write_images,
    write_imu,
    write_pointcloud_kitti,
    write_poses,
)
from .stream import Decoder, Message, MessageType, StreamError, StreamServer, decode_all, encode, receive, stream_serve

__all__ = [
    "ConfigError", "ScenarioConfig", "SensorSpec", "default_sensors", "dumps", "load_configs", "load_scenario",
    "load_sensor", "parse_dataclass", "parse_sensor", "sensor_to_dict", "to_dict", "DatasetWriter", "dataset_messages",
    "load_lidar_frames", "read_manifest", "tree_digest", "verify", "read_imu", "read_pointcloud_kitti", "read_poses",
    "write_images", "write_imu", "write_pointcloud_kitti", "write_poses", "Decoder", "Message", "MessageType",
    "StreamError", "StreamServer", "decode_all", "encode", "receive", "stream_serve",
]
