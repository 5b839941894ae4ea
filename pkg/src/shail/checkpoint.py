"""Versioned checkpoint files: one .npz holding a JSON meta blob (architecture,
option set, RNG state, version) plus all parameter arrays."""

import json

import numpy as np

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, meta, arrays):
    meta = dict(meta)
    meta["format_version"] = FORMAT_VERSION
    payload = {f"arr_{k}": np.asarray(v) for k, v in arrays.items()}
    payload["meta_json"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as f:
        np.savez(f, **payload)


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(bytes(z["meta_json"].tobytes()).decode())
        if meta.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {meta.get('format_version')}")
        arrays = {k[4:]: z[k].copy() for k in z.files if k.startswith("arr_")}
    return meta, arrays


def mlp_arrays(prefix, mlp):
    out = {}
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        out[f"{prefix}_w{i}"] = w
        out[f"{prefix}_b{i}"] = b
    return out


def load_mlp(prefix, mlp, arrays):
    for i in range(len(mlp.weights)):
        mlp.weights[i][...] = arrays[f"{prefix}_w{i}"]
        mlp.biases[i][...] = arrays[f"{prefix}_b{i}"]
    return mlp


def rng_state_to_json(rng):
    return json.dumps(rng.bit_generator.state)


def rng_from_json(s):
    rng = np.random.default_rng()
    rng.bit_generator.state = json.loads(s)
    return rng
