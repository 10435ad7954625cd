"""JSON serialization for grid models, cost maps, and measurement files.

Complex numbers are stored as two-element ``[re, im]`` lists, phases as a
string such as ``"abc"``.  Validation errors name the offending record so
a bad file points at the bus or branch that broke, not a stack trace.
"""

import json

import numpy as np

from .errors import ValidationError
from .grid import PHASES, Branch, Bus, GridModel, Source


def _pair(value, where):
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(v, (int, float)) for v in value)
    ):
        raise ValidationError("%s: expected a [re, im] pair, got %r" % (where, value))
    return complex(value[0], value[1])


def _pair_list(values, n, where):
    if not isinstance(values, list) or len(values) != n:
        raise ValidationError("%s: expected %d [re, im] pairs" % (where, n))
    return np.array([_pair(v, where) for v in values])


def _c2p(z):
    return [float(np.real(z)), float(np.imag(z))]


def _require(record, key, where):
    if key not in record:
        raise ValidationError("%s: missing field '%s'" % (where, key))
    return record[key]


def _parse_phases(raw, where):
    if not isinstance(raw, str) or not raw:
        raise ValidationError("%s: phases must be a non-empty string" % where)
    seen = []
    for ch in raw:
        if ch not in PHASES:
            raise ValidationError("%s: unknown phase '%s'" % (where, ch))
        if ch in seen:
            raise ValidationError("%s: duplicate phase '%s'" % (where, ch))
        seen.append(ch)
    return tuple(seen)


def _parse_bus(record, idx):
    where = "bus %s" % record.get("id", "#%d" % idx)
    if not isinstance(record, dict):
        raise ValidationError("bus #%d: expected an object" % idx)
    bus_id = _require(record, "id", where)
    if not isinstance(bus_id, str) or not bus_id:
        raise ValidationError("bus #%d: id must be a non-empty string" % idx)
    phases = _parse_phases(_require(record, "phases", where), where)
    n = len(phases)
    injection = None
    if "injection" in record:
        injection = _pair_list(record["injection"], n, where + ": injection")
    zero_injection = None
    if "zero_injection" in record:
        raw = record["zero_injection"]
        if not isinstance(raw, list) or len(raw) != n or not all(
            isinstance(v, bool) for v in raw
        ):
            raise ValidationError(
                "%s: zero_injection must be %d booleans" % (where, n)
            )
        zero_injection = np.array(raw)
    shunt = None
    if "shunt" in record:
        shunt = _pair_list(record["shunt"], n, where + ": shunt")
    return Bus(
        id=bus_id,
        phases=phases,
        injection=injection,
        zero_injection=zero_injection,
        shunt=shunt,
    )


def _parse_branch(record, idx):
    where = "branch #%d" % idx
    if not isinstance(record, dict):
        raise ValidationError(where + ": expected an object")
    from_bus = _require(record, "from", where)
    to_bus = _require(record, "to", where)
    where = "branch %s->%s" % (from_bus, to_bus)
    raw = _require(record, "admittance", where)
    if not isinstance(raw, list) or not raw:
        raise ValidationError(where + ": admittance must be a nested list")
    block = np.array(
        [_pair_list(row, len(raw[0]), where + ": admittance") for row in raw]
    )
    return Branch(from_bus=from_bus, to_bus=to_bus, admittance=block)


def load_grid(path):
    """Read a grid model from a JSON file.

    Raises ValidationError with the offending record named whenever the
    file disagrees with the schema; the returned model has already passed
    GridModel.validate().
    """
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError("%s: invalid JSON (%s)" % (path, exc)) from exc
    if not isinstance(data, dict):
        raise ValidationError("grid file must contain a JSON object")
    raw_buses = _require(data, "buses", "grid file")
    if not isinstance(raw_buses, list) or not raw_buses:
        raise ValidationError("grid file: buses must be a non-empty list")
    buses = [_parse_bus(b, i) for i, b in enumerate(raw_buses)]
    raw_branches = data.get("branches", [])
    if not isinstance(raw_branches, list):
        raise ValidationError("grid file: branches must be a list")
    branches = [_parse_branch(b, i) for i, b in enumerate(raw_branches)]
    raw_source = _require(data, "source", "grid file")
    src_bus = _require(raw_source, "bus", "source")
    by_id = {b.id: b for b in buses}
    if src_bus not in by_id:
        raise ValidationError("source: unknown bus '%s'" % src_bus)
    voltage = _pair_list(
        _require(raw_source, "voltage", "source"),
        len(by_id[src_bus].phases),
        "source: voltage",
    )
    sigma_prior = None
    if "sigma_f_prior" in data:
        raw = data["sigma_f_prior"]
        if not isinstance(raw, list) or not raw:
            raise ValidationError("sigma_f_prior: expected a nested list")
        sigma_prior = np.array(
            [_pair_list(row, len(raw), "sigma_f_prior") for row in raw]
        )
    model = GridModel(
        buses=buses,
        branches=branches,
        source=Source(bus=src_bus, voltage=voltage),
        sigma_f_prior=sigma_prior,
    )
    model.validate()
    return model


def save_grid(model, path):
    """Write a grid model to JSON in the load_grid schema."""
    data = {
        "buses": [
            {
                "id": b.id,
                "phases": "".join(b.phases),
                "injection": [_c2p(z) for z in b.injection],
                "zero_injection": [bool(v) for v in b.zero_injection],
                "shunt": [_c2p(z) for z in b.shunt],
            }
            for b in model.buses
        ],
        "branches": [
            {
                "from": br.from_bus,
                "to": br.to_bus,
                "admittance": [
                    [_c2p(z) for z in row] for row in np.atleast_2d(br.admittance)
                ],
            }
            for br in model.branches
        ],
        "source": {
            "bus": model.source.bus,
            "voltage": [_c2p(z) for z in model.source.voltage],
        },
    }
    if model.sigma_f_prior is not None:
        data["sigma_f_prior"] = [
            [_c2p(z) for z in row] for row in np.asarray(model.sigma_f_prior)
        ]
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_cost_map(path):
    """Read an ordered pattern -> cost list.

    Accepts either a JSON object (insertion order kept) or a list of
    [pattern, cost] pairs; first match wins downstream, so order matters.
    """
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError("%s: invalid JSON (%s)" % (path, exc)) from exc
    if isinstance(data, dict):
        pairs = list(data.items())
    elif isinstance(data, list):
        pairs = []
        for i, item in enumerate(data):
            if not isinstance(item, (list, tuple)) or len(item) != 2:
                raise ValidationError(
                    "cost map entry #%d: expected [pattern, cost]" % i
                )
            pairs.append((item[0], item[1]))
    else:
        raise ValidationError("cost map must be an object or a list of pairs")
    out = []
    for pattern, cost in pairs:
        if not isinstance(pattern, str) or not pattern:
            raise ValidationError("cost map: pattern must be a non-empty string")
        if not isinstance(cost, (int, float)):
            raise ValidationError(
                "cost map entry '%s': cost must be a number" % pattern
            )
        out.append((pattern, float(cost)))
    return out


def load_measurements(path):
    """Read measured values keyed by candidate label.

    Returns (labels, values) with values complex; the caller matches the
    labels against an enumerated candidate set.
    """
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError("%s: invalid JSON (%s)" % (path, exc)) from exc
    if isinstance(data, dict):
        data = _require(data, "measurements", "measurement file")
    if not isinstance(data, list) or not data:
        raise ValidationError("measurement file: expected a non-empty list")
    labels = []
    values = []
    for i, item in enumerate(data):
        where = "measurement #%d" % i
        if not isinstance(item, dict):
            raise ValidationError(where + ": expected an object")
        label = _require(item, "label", where)
        if not isinstance(label, str) or not label:
            raise ValidationError(where + ": label must be a non-empty string")
        labels.append(label)
        values.append(_pair(_require(item, "value", where), where + ": value"))
    return labels, np.array(values)
