"""Checkpoint persistence.

A checkpoint is one self-describing binary file: a 4-byte magic, a
length-prefixed JSON header (tensor names/shapes and all hyperparameters),
then the raw tensor payload as little-endian float32 in header order.
Round trips are bit-exact; unknown format versions are rejected.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DataError
from .flow import FlowConfig
from .lut import Lut3D
from .purifier import PurifierNet
from .tensor import Tensor
from .training import AdamW, OptState

MAGIC = b"HZFC"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    net: PurifierNet
    lut: Optional[Lut3D]
    flow: FlowConfig
    opt_state: Optional[OptState] = None
    metadata: dict = field(default_factory=dict)


def _payload_entries(net: PurifierNet, lut: Optional[Lut3D],
                     optimizer: Optional[AdamW]):
    entries = [(f"net.{name}", p.data) for name, p in net.parameters().items()]
    if lut is not None:
        entries.append(("lut.grid", lut.grid.data))
    if optimizer is not None:
        for name, arr in optimizer.state.m.items():
            entries.append((f"opt.m.{name}", arr))
        for name, arr in optimizer.state.v.items():
            entries.append((f"opt.v.{name}", arr))
    return entries


def save_checkpoint(path: str, net: PurifierNet, lut: Optional[Lut3D],
                    flow_cfg: FlowConfig, optimizer: Optional[AdamW] = None,
                    metadata: Optional[dict] = None) -> None:
    entries = _payload_entries(net, lut, optimizer)
    header = {
        "format_version": FORMAT_VERSION,
        "flow": {"solver": flow_cfg.solver, "steps": flow_cfg.steps,
                 "t0": flow_cfg.t0, "t1": flow_cfg.t1, "lam": flow_cfg.lam},
        "net": {"width": net.width},
        "lut": None if lut is None else {
            "m": lut.m, "c_max": lut.c_max,
            "trainable": bool(lut.grid.requires_grad)},
        "optimizer": None if optimizer is None else {
            "step_count": optimizer.state.step_count,
            "lr": optimizer.lr, "weight_decay": optimizer.weight_decay,
            "betas": list((optimizer.beta1, optimizer.beta2)),
            "eps": optimizer.eps},
        "metadata": metadata or {},
        "tensors": [{"name": name, "shape": list(arr.shape)}
                    for name, arr in entries],
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _name, arr in entries:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise DataError(f"{path}: not a hazeflow checkpoint")
        (hlen,) = struct.unpack("<I", fh.read(4))
        try:
            header = json.loads(fh.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}: corrupt checkpoint header") from exc
        version = header.get("format_version")
        if version != FORMAT_VERSION:
            raise DataError(
                f"{path}: unsupported checkpoint format version {version!r} "
                f"(expected {FORMAT_VERSION})")

        tensors = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(4 * count)
            if len(raw) != 4 * count:
                raise DataError(f"{path}: truncated tensor payload")
            tensors[entry["name"]] = np.frombuffer(
                raw, dtype="<f4").astype(np.float32).reshape(shape)

    net = PurifierNet(width=int(header["net"]["width"]))
    net.load_state({name[4:]: arr for name, arr in tensors.items()
                    if name.startswith("net.")})

    lut = None
    if header["lut"] is not None:
        lut = Lut3D(Tensor(tensors["lut.grid"],
                           requires_grad=bool(header["lut"]["trainable"])),
                    c_max=float(header["lut"]["c_max"]))

    fl = header["flow"]
    flow_cfg = FlowConfig(solver=fl["solver"], steps=int(fl["steps"]),
                          t0=float(fl["t0"]), t1=float(fl["t1"]),
                          lam=float(fl["lam"]))

    opt_state = None
    if header["optimizer"] is not None:
        opt_state = OptState(
            m={name[6:]: arr for name, arr in tensors.items()
               if name.startswith("opt.m.")},
            v={name[6:]: arr for name, arr in tensors.items()
               if name.startswith("opt.v.")},
            step_count=int(header["optimizer"]["step_count"]))

    return Checkpoint(net=net, lut=lut, flow=flow_cfg, opt_state=opt_state,
                      metadata=header.get("metadata", {}))
