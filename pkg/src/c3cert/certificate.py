"""Solved certificates: named template polynomials plus run metadata."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .polyalg import MonomialBasis, Polynomial, basis, coefficients, from_basis, parse

__all__ = ["Certificate", "CertificateError"]


class CertificateError(ValueError):
    pass


@dataclass
class Certificate:
    """Template polynomials keyed by name (``T``, ``T^(1,3)``, ``V[0]``, ``Z`` ...)."""

    polys: dict[str, Polynomial]
    bases: dict[str, MonomialBasis]
    constants: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    multipliers: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> Polynomial:
        try:
            return self.polys[name]
        except KeyError:
            raise CertificateError(f"certificate has no polynomial {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.polys

    def names(self, family: str | None = None) -> list[str]:
        return [n for n in self.polys if family is None or n.startswith(family)]

    def coefficient_vector(self, name: str) -> list[float]:
        return coefficients(self.polys[name], self.bases[name])

    @classmethod
    def from_coefficients(cls, coeffs: dict[str, list[float]], bases: dict[str, MonomialBasis], **kw) -> "Certificate":
        polys = {}
        for name, c in coeffs.items():
            if len(c) != len(bases[name]):
                raise CertificateError(
                    f"row {name!r}: {len(c)} coefficients for a basis of {len(bases[name])} monomials")
            polys[name] = from_basis(bases[name], c)
        return cls(polys, dict(bases), **kw)

    def to_json(self) -> dict:
        entries = {}
        for name, p in self.polys.items():
            b = self.bases[name]
            c = coefficients(p, b)
            entries[name] = {
                "variables": list(b.variables),
                "degree": b.max_degree,
                "coefficients": [repr(float(v)) for v in c],
                "coefficients_hex": [float(v).hex() for v in c],
                "polynomial": p.to_string(),
            }
        return {"format": "c3cert-certificate/1", "polynomials": entries,
                "constants": self.constants, "meta": self.meta}

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    def digest(self) -> str:
        body = json.dumps({k: v["coefficients_hex"] for k, v in self.to_json()["polynomials"].items()},
                          sort_keys=True)
        return hashlib.sha256(body.encode()).hexdigest()

    @classmethod
    def from_json(cls, data: dict) -> "Certificate":
        if "polynomials" not in data:
            raise CertificateError("not a certificate document (missing 'polynomials')")
        polys, bases = {}, {}
        for name, entry in data["polynomials"].items():
            try:
                b = basis(entry["variables"], int(entry["degree"]))
            except (KeyError, TypeError) as exc:
                raise CertificateError(f"row {name!r}: malformed basis descriptor") from exc
            if "coefficients_hex" in entry:
                c = [float.fromhex(h) for h in entry["coefficients_hex"]]
            elif "coefficients" in entry:
                c = [float(v) for v in entry["coefficients"]]
            else:
                polys[name] = parse(entry["polynomial"])
                bases[name] = b
                continue
            if len(c) != len(b):
                raise CertificateError(
                    f"row {name!r}: {len(c)} coefficients for a basis of {len(b)} monomials")
            polys[name] = from_basis(b, c)
            bases[name] = b
        return cls(polys, bases, dict(data.get("constants", {})), dict(data.get("meta", {})))

    @classmethod
    def load(cls, path: str | Path) -> "Certificate":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise CertificateError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_json(data)
