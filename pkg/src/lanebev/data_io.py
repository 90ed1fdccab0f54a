"""File formats: binary tensors, JSON schemas, OpenLane frames, PGM/PPM.

Binary tensor layout (extension .bldt), all multi-byte integers little-endian:

    bytes 0-3   magic "BLDT"
    bytes 4-5   version, uint16 (currently 1)
    byte  6     ndim, uint8, 1..4
    next 4*ndim dims, uint32 each
    payload     float32 little-endian, row-major, 4 * prod(dims) bytes

JSON schemas for cameras, grids, lanes, scenes and homographies live here
so every CLI subcommand shares one source of truth.  OpenLane-style frame
annotations are parsed into road-frame scene records; the frame's 4x4
extrinsic maps camera coordinates to the road frame and lane points are
stored camera-frame as 3xN arrays, matching the public per-frame layout.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .camera_geometry import CameraRig, Extrinsics, Homography, Intrinsics
from .errors import (
    BadMagic,
    MalformedJson,
    MissingField,
    NonOrthonormalRotation,
    TruncatedPayload,
    UnsupportedVersion,
)
from .lane_grid import GridSpec, Lane3D
from .metrics import EvalConfig
from .postproc import DecodeParams, FittedLane
from .synth import SceneRecord

MAGIC = b"BLDT"
VERSION = 1


# --- binary tensors ---

def write_tensor(array: np.ndarray, path: str | Path) -> None:
    arr = np.ascontiguousarray(array, dtype="<f4")
    if not 1 <= arr.ndim <= 4:
        raise ValueError(f"tensor rank must be 1..4, got {arr.ndim}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<B", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes(order="C"))


def read_tensor(path: str | Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise BadMagic(f"{path}: magic {blob[:4]!r} != {MAGIC!r}")
    if len(blob) < 7:
        raise TruncatedPayload(f"{path}: header cut short at {len(blob)} bytes")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != VERSION:
        raise UnsupportedVersion(f"{path}: version {version}, expected {VERSION}")
    ndim = blob[6]
    if not 1 <= ndim <= 4:
        raise TruncatedPayload(f"{path}: invalid rank {ndim}")
    header_end = 7 + 4 * ndim
    if len(blob) < header_end:
        raise TruncatedPayload(f"{path}: dims cut short")
    dims = struct.unpack_from(f"<{ndim}I", blob, 7)
    expected = 4 * int(np.prod(dims))
    payload = blob[header_end:]
    if len(payload) != expected:
        raise TruncatedPayload(f"{path}: payload {len(payload)} bytes, expected {expected}")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()


# --- camera / grid / homography JSON ---

def rig_to_dict(rig: CameraRig) -> dict:
    return {
        "intrinsics": {
            "fx": rig.intrinsics.fx,
            "fy": rig.intrinsics.fy,
            "cx": rig.intrinsics.cx,
            "cy": rig.intrinsics.cy,
            "skew": rig.intrinsics.skew,
        },
        "extrinsics": {
            "rotation": rig.extrinsics.rotation.tolist(),
            "translation": rig.extrinsics.translation.tolist(),
        },
        "image_size": list(rig.image_size),
    }


def rig_from_dict(data: dict) -> CameraRig:
    intr = data["intrinsics"]
    extr = data["extrinsics"]
    return CameraRig(
        intrinsics=Intrinsics(
            fx=intr["fx"], fy=intr["fy"], cx=intr["cx"], cy=intr["cy"], skew=intr.get("skew", 0.0)
        ),
        extrinsics=Extrinsics(
            rotation=np.asarray(extr["rotation"], dtype=float),
            translation=np.asarray(extr["translation"], dtype=float),
        ),
        image_size=tuple(data["image_size"]),
    )


def load_rig(path: str | Path) -> CameraRig:
    return rig_from_dict(json.loads(Path(path).read_text()))


def save_rig(rig: CameraRig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(rig_to_dict(rig), indent=2) + "\n")


def gridspec_from_dict(data: dict) -> GridSpec:
    return GridSpec(
        x_min=data.get("x_min", 3.0),
        x_max=data.get("x_max", 103.0),
        y_min=data.get("y_min", -10.0),
        y_max=data.get("y_max", 10.0),
        cell=data.get("cell", 0.5),
    )


def load_gridspec(path: str | Path) -> GridSpec:
    return gridspec_from_dict(json.loads(Path(path).read_text()))


def save_homography(h: Homography, path: str | Path) -> None:
    Path(path).write_text(json.dumps({"matrix": h.matrix.tolist()}, indent=2) + "\n")


def load_homography(path: str | Path) -> Homography:
    return Homography(np.asarray(json.loads(Path(path).read_text())["matrix"], dtype=float))


def decode_params_from_dict(data: dict) -> DecodeParams:
    return DecodeParams(
        s_threshold=data.get("s_threshold", 0.5),
        d_gap=data.get("d_gap", 1.5),
        min_points=data.get("min_points", 4),
        fit_degree=data.get("fit_degree", 3),
    )


def eval_config_from_dict(data: dict) -> EvalConfig:
    return EvalConfig(
        sample_xs=tuple(data.get("sample_xs", tuple(float(x) for x in range(3, 103, 5)))),
        match_threshold=data.get("match_threshold", 1.5),
        match_ratio=data.get("match_ratio", 0.75),
        near_limit=data.get("near_limit", 40.0),
    )


# --- lanes JSON ---

def lanes_to_dict(lanes: list[Lane3D], fits: list[FittedLane] | None = None) -> dict:
    out = []
    for i, lane in enumerate(lanes):
        entry = {"id": int(lane.id), "points": lane.points.tolist()}
        if fits is not None:
            entry["fit"] = {
                "y_coeffs": fits[i].y_coeffs.tolist(),
                "z_coeffs": fits[i].z_coeffs.tolist(),
                "x_range": list(fits[i].x_range),
            }
        out.append(entry)
    return {"lanes": out}


def lanes_from_dict(data: dict) -> list[Lane3D]:
    return [
        Lane3D(points=np.asarray(entry["points"], dtype=float), id=int(entry.get("id", i + 1)))
        for i, entry in enumerate(data["lanes"])
    ]


def load_lanes(path: str | Path) -> list[Lane3D]:
    return lanes_from_dict(json.loads(Path(path).read_text()))


def save_lanes(lanes: list[Lane3D], path: str | Path, fits: list[FittedLane] | None = None) -> None:
    Path(path).write_text(json.dumps(lanes_to_dict(lanes, fits), indent=2) + "\n")


# --- scene records ---

def scene_to_dict(scene: SceneRecord) -> dict:
    return {
        "camera": rig_to_dict(scene.rig),
        "lanes": lanes_to_dict(scene.lanes)["lanes"],
        "scene_tag": scene.scene_tag,
    }


def scene_from_dict(data: dict) -> SceneRecord:
    return SceneRecord(
        rig=rig_from_dict(data["camera"]),
        lanes=lanes_from_dict({"lanes": data["lanes"]}),
        scene_tag=data.get("scene_tag", ""),
    )


def load_scene(path: str | Path) -> SceneRecord:
    return scene_from_dict(json.loads(Path(path).read_text()))


def save_scene(scene: SceneRecord, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=2) + "\n")


# --- OpenLane-style frames ---

def parse_openlane_frame(json_text: str) -> SceneRecord:
    """Parse one OpenLane-layout frame annotation into a road-frame scene.

    Required fields: "intrinsic" (3x3), "extrinsic" (4x4, camera to road),
    "lane_lines" (list of {"xyz": 3xN camera-frame points, optional
    "visibility", "category"}).  Points keep their full extent; clipping to
    the grid is the encoder's job.  Visibility flags are preserved on the
    parse result but not interpreted here.
    """
    try:
        data = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise MalformedJson(str(exc)) from exc

    for key in ("intrinsic", "extrinsic", "lane_lines"):
        if key not in data:
            raise MissingField(f"frame is missing '{key}'")

    intrinsic = np.asarray(data["intrinsic"], dtype=float)
    extrinsic = np.asarray(data["extrinsic"], dtype=float)
    if intrinsic.shape != (3, 3):
        raise MissingField(f"intrinsic must be 3x3, got {intrinsic.shape}")
    if abs(np.linalg.det(intrinsic)) < 1e-12:
        raise MissingField("intrinsic matrix is not invertible")
    if extrinsic.shape != (4, 4):
        raise MissingField(f"extrinsic must be 4x4, got {extrinsic.shape}")
    rot_c2r = extrinsic[:3, :3]
    if np.max(np.abs(rot_c2r.T @ rot_c2r - np.eye(3))) > 1e-6:
        raise NonOrthonormalRotation("extrinsic rotation fails orthonormality within 1e-6")

    # road->camera rig from the camera->road extrinsic
    rotation = rot_c2r.T
    translation = -rotation @ extrinsic[:3, 3]
    rig = CameraRig(
        intrinsics=Intrinsics(
            fx=intrinsic[0, 0],
            fy=intrinsic[1, 1],
            cx=intrinsic[0, 2],
            cy=intrinsic[1, 2],
            skew=intrinsic[0, 1],
        ),
        extrinsics=Extrinsics(rotation=rotation, translation=translation),
        image_size=tuple(data.get("image_size", (1024, 576))),
    )

    lanes = []
    for i, entry in enumerate(data["lane_lines"]):
        if "xyz" not in entry:
            raise MissingField(f"lane_lines[{i}] is missing 'xyz'")
        xyz = np.asarray(entry["xyz"], dtype=float)
        if xyz.ndim != 2 or xyz.shape[0] != 3:
            raise MissingField(f"lane_lines[{i}].xyz must be 3xN, got {xyz.shape}")
        p_road = (extrinsic[:3, :3] @ xyz + extrinsic[:3, 3:4]).T
        lanes.append(Lane3D(points=p_road, id=i + 1))
    return SceneRecord(rig=rig, lanes=lanes, scene_tag=str(data.get("file_path", "")))


def export_openlane_frame(scene: SceneRecord, file_path: str = "") -> str:
    """Serialize a scene in the OpenLane per-frame layout (inverse of parse)."""
    rig = scene.rig
    rot = rig.extrinsics.rotation
    extrinsic = np.eye(4)
    extrinsic[:3, :3] = rot.T
    extrinsic[:3, 3] = rig.extrinsics.camera_center
    lane_lines = []
    for lane in scene.lanes:
        p_cam = (lane.points @ rot.T + rig.extrinsics.translation).T
        lane_lines.append(
            {
                "xyz": p_cam.tolist(),
                "visibility": [1.0] * lane.points.shape[0],
                "category": int(lane.id),
            }
        )
    frame = {
        "intrinsic": rig.intrinsics.matrix.tolist(),
        "extrinsic": extrinsic.tolist(),
        "lane_lines": lane_lines,
        "image_size": list(rig.image_size),
        "file_path": file_path or scene.scene_tag,
    }
    return json.dumps(frame)


# --- PGM / PPM images ---

def write_pnm(image: np.ndarray, path: str | Path) -> None:
    """Write a [0, 1] float image as binary PGM (2-D) or PPM (3-D, 3 channels)."""
    img = np.asarray(image, dtype=float)
    data = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    if data.ndim == 2:
        header = f"P5\n{data.shape[1]} {data.shape[0]}\n255\n"
    elif data.ndim == 3 and data.shape[2] == 3:
        header = f"P6\n{data.shape[1]} {data.shape[0]}\n255\n"
    else:
        raise ValueError(f"image must be HxW or HxWx3, got {data.shape}")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(data.tobytes())


def read_pnm(path: str | Path) -> np.ndarray:
    """Read binary PGM/PPM into a [0, 1] float array."""
    blob = Path(path).read_bytes()
    if blob[:2] not in (b"P5", b"P6"):
        raise ValueError(f"{path}: only binary PGM (P5) / PPM (P6) supported")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(blob[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    channels = 3 if blob[:2] == b"P6" else 1
    raw = np.frombuffer(blob, dtype=np.uint8, count=width * height * channels, offset=pos)
    img = raw.reshape((height, width, channels)).astype(float) / float(maxval)
    return img[:, :, 0] if channels == 1 else img
