"""Supervised VAE toolkit: Python access to checkpoints, the JSON API and the CLI."""

import json

import numpy as np

from ._core import SvaeError, load_mnist, run_cli, synth_toy_dataset
from ._core import Model as _Model

__all__ = ["Model", "ApiError", "SvaeError", "load_mnist", "run_cli", "synth_toy_dataset"]


class ApiError(RuntimeError):
    def __init__(self, status, body):
        super().__init__(f"{status}: {body.get('error', body)}")
        self.status = status
        self.body = body


def _image(x):
    return np.asarray(x, dtype=float).ravel().tolist()


class Model:
    """A trained SVAE checkpoint. Methods mirror the HTTP API and return dicts."""

    def __init__(self, checkpoint):
        self._m = _Model(str(checkpoint))
        self.config = json.loads(self._m.config_json())

    def request(self, path, body=None, method="POST"):
        status, text = self._m.request(method, path, "" if body is None else json.dumps(body))
        out = json.loads(text)
        if status != 200:
            raise ApiError(status, out)
        return out

    def metadata(self):
        return self.request("/api/model", method="GET")

    def encode(self, image, seed=0, samples=None):
        body = {"image": _image(image), "seed": seed}
        if samples is not None:
            body["samples"] = samples
        return self.request("/api/encode", body)

    def generate(self, image, sigma=None, z2=None, seed=0):
        body = {"image": _image(image), "seed": seed}
        if sigma is not None:
            body["sigma"] = sigma
        if z2 is not None:
            body["z2_override"] = list(z2)
        return self.request("/api/generate", body)

    def grid(self, image, dim_i=0, dim_j=1, step=0.5, radius=2):
        return self.request(
            "/api/grid", {"image": _image(image), "dim_i": dim_i, "dim_j": dim_j, "step": step, "radius": radius}
        )

    def attribute(self, image, method="ig", target="classifier", class_index=None, k=None, ref_image=None, **options):
        body = {"image": _image(image), "method": method, "target": target, **options}
        if class_index is not None:
            body["class"] = class_index
        if k is not None:
            body["k"] = k
        if ref_image is not None:
            body["ref_image"] = _image(ref_image)
        return self.request("/api/attribute", body)

    def counterfactual(self, image, target_class, max_iters=500, step=0.1):
        return self.request(
            "/api/counterfactual",
            {"image": _image(image), "target_class": target_class, "max_iters": max_iters, "step": step},
        )

    def classify(self, images, n_samples=32, seed=0):
        return self._m.classify(np.atleast_2d(images), n_samples, seed)

    def decode(self, z):
        return self._m.decode(np.atleast_2d(z))

    def retention(self, images, labels, sigmas=(0.1, 0.5, 1.0, 2.0, 5.0), per_sigma=10, seed=0, n_samples=32):
        sigma, kept, l2 = self._m.retention(np.atleast_2d(images), [int(v) for v in labels], list(sigmas), per_sigma,
                                            seed, n_samples)
        return {"sigma": sigma, "retention": kept, "mean_l2": l2}
