"""Closed-form performance models of the 28 GHz transceiver blocks.

Every evaluator maps a :class:`ParamVector` to a :class:`SpecVector`. The
device behaviour behind the formulas is first-order (square-law-free linear
gm per width, fixed current density) and is collected in
:class:`DeviceConstants` so that a real simulator can replace it wholesale.

All arithmetic is scalar ``math`` on Python floats, which keeps the results
bit-identical between a dataset row and a later re-simulation of the same
parameters.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field
from functools import lru_cache

from mmsizing.errors import DomainError, OscillationFailure, SchemaError

SPEED_OF_LIGHT = 2.99792458e8
S11_FLOOR_DB = -200.0

# Table units -> SI scale factor.
UNIT_SCALE = {
    "fF": 1e-15,
    "pF": 1e-12,
    "pH": 1e-12,
    "Ohm": 1.0,
    "um": 1e-6,
}

BLOCK_PARAMS = {
    "vco": (("C", "fF"), ("L", "pH"), ("R_p", "Ohm"), ("W_N1", "um"), ("W_N2", "um"), ("W_var", "um")),
    "pa": (("L_ip", "pH"), ("L_is", "pH"), ("L_op", "pH"), ("L_os", "pH"), ("W_N1", "um"), ("W_N2", "um")),
    "lna": (("C_1", "fF"), ("C_2", "fF"), ("L_d", "pH"), ("L_g", "pH"), ("L_s", "pH"), ("W_N1", "um"), ("W_N2", "um")),
    "mixer": (("C", "pF"), ("R", "Ohm"), ("W_N1", "um"), ("W_N2", "um")),
    "cascode": (("R_D", "Ohm"), ("W_N1", "um"), ("W_N2", "um")),
}

BLOCK_SPECS = {
    "vco": (("phase_noise", "dBc/Hz"), ("tuning_range", "Hz")),
    "pa": (("power_gain", "dB"), ("drain_eff", "%"), ("pae", "%")),
    "lna": (("power_gain", "dB"), ("s11", "dB"), ("noise_figure", "dB")),
    "mixer": (("voltage_swing", "V"), ("conversion_gain", "dB")),
    "cascode": (("gain", "dB"),),
    "tx_system": (("dc_power", "W"), ("bandwidth", "Hz"), ("output_power", "dBm"), ("voltage_swing", "V")),
    "rx_system": (("dc_power", "W"), ("gain", "dB"), ("noise_figure", "dB")),
}

SYSTEM_BLOCKS = {
    "tx_system": ("vco", "pa"),
    "rx_system": ("lna", "mixer", "cascode"),
}

for _system, _parts in SYSTEM_BLOCKS.items():
    BLOCK_PARAMS[_system] = tuple(
        (f"{part}.{name}", unit) for part in _parts for name, unit in BLOCK_PARAMS[part]
    )

BLOCKS = tuple(BLOCK_SPECS)


def param_schema(block):
    """Ordered ``(name, unit)`` pairs of a block's parameters."""
    try:
        return BLOCK_PARAMS[block]
    except KeyError:
        raise SchemaError(f"unknown block {block!r}; expected one of {', '.join(BLOCKS)}") from None


def spec_schema(block):
    """Ordered ``(name, unit)`` pairs of a block's specifications."""
    try:
        return BLOCK_SPECS[block]
    except KeyError:
        raise SchemaError(f"unknown block {block!r}; expected one of {', '.join(BLOCKS)}") from None


@dataclass(frozen=True)
class DeviceConstants:
    """Behavioural device model, SI units throughout."""

    k_gm: float = 1.0e3            # S/m   (1 mS/um)
    k_cgs: float = 1.0e-9          # F/m   (1 fF/um)
    k_var_min: float = 0.6e-9      # F/m
    k_var_max: float = 1.4e-9      # F/m
    j_bias: float = 50.0           # A/m   (0.05 mA/um)
    gamma_noise: float = 1.3
    vdd: float = 1.2
    z0: float = 50.0
    q_ind: float = 15.0
    q_xfmr: float = 10.0
    k_couple: float = 0.8
    kt: float = 4.0035e-21         # J, 290 K
    flicker_corner: float = 2 * math.pi * 100e3   # rad/s

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if not getattr(self, f.name) > 0:
                raise DomainError(f"device constant {f.name} must be > 0, got {getattr(self, f.name)!r}")
        # equality allowed: zero tuning range is a legitimate degenerate varactor
        if self.k_var_min > self.k_var_max:
            raise DomainError("k_var_min must not exceed k_var_max")
        if self.k_couple > 1:
            raise DomainError("k_couple must be <= 1")


@dataclass(frozen=True)
class OperatingPoint:
    f_rf: float = 28e9
    f_if: float = 100e6
    pn_offset: float = 1e6
    pa_pin_start: float = -30.0    # dBm
    pa_pin_stop: float = 10.0      # dBm
    pa_pin_step: float = 1.0       # dB
    mixer_vin_amp: float = 0.05    # V
    sens_bw: float = 100e6         # Hz
    sens_snr: float = 10.0         # dB
    lna_gamma_s: float = 0.0       # source reflection coefficient
    lna_gamma_l: float = 0.0       # load reflection coefficient

    def __post_init__(self):
        for name in ("f_rf", "f_if", "pn_offset", "pa_pin_step", "mixer_vin_amp", "sens_bw"):
            if not getattr(self, name) > 0:
                raise DomainError(f"operating point {name} must be > 0")
        if self.f_if >= self.f_rf:
            raise DomainError("f_if must be below f_rf")
        if self.pa_pin_stop < self.pa_pin_start:
            raise DomainError("pa_pin_stop must be >= pa_pin_start")
        for name in ("lna_gamma_s", "lna_gamma_l"):
            if abs(getattr(self, name)) >= 1:
                raise DomainError(f"{name} must satisfy |gamma| < 1")

    @property
    def f_lo(self):
        return self.f_rf - self.f_if

    def pin_sweep_dbm(self):
        n = int(math.floor((self.pa_pin_stop - self.pa_pin_start) / self.pa_pin_step + 1e-9)) + 1
        return [self.pa_pin_start + i * self.pa_pin_step for i in range(n)]


@dataclass(frozen=True)
class _Vector:
    block: str
    values: tuple = field(default=())

    def __post_init__(self):
        self._validate()

    def _validate(self):
        pass

    def names(self):
        return tuple(name for name, _, _ in self.values)

    def as_dict(self):
        return {name: value for name, value, _ in self.values}

    def as_tuple(self):
        return tuple(value for _, value, _ in self.values)

    def __getitem__(self, name):
        for n, v, _ in self.values:
            if n == name:
                return v
        raise KeyError(name)

    def __len__(self):
        return len(self.values)


class ParamVector(_Vector):
    """Circuit parameters of one block, in the sweep-table units."""

    def _validate(self):
        schema = param_schema(self.block)
        got = tuple((n, u) for n, _, u in self.values)
        if got != schema:
            raise SchemaError(f"{self.block} parameters must be {_fmt_schema(schema)}, got {_fmt_schema(got)}")
        for name, value, _ in self.values:
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise DomainError(f"parameter {name} must be a positive finite number, got {value!r}")

    @classmethod
    def from_values(cls, block, values):
        """Build from bare numbers (sequence in schema order, or a mapping)."""
        schema = param_schema(block)
        if isinstance(values, dict):
            missing = [n for n, _ in schema if n not in values]
            extra = [n for n in values if n not in dict(schema)]
            if missing or extra:
                raise SchemaError(f"{block}: missing {missing}, unexpected {extra}")
            values = [values[n] for n, _ in schema]
        values = list(values)
        if len(values) != len(schema):
            raise SchemaError(f"{block} expects {len(schema)} parameters, got {len(values)}")
        return cls(block, tuple((n, float(v), u) for (n, u), v in zip(schema, values)))

    def si(self, name):
        for n, v, u in self.values:
            if n == name:
                return v * UNIT_SCALE[u]
        raise KeyError(name)

    def part(self, sub):
        """Extract one constituent block of a system vector."""
        prefix = sub + "."
        vals = [v for n, v, _ in self.values if n.startswith(prefix)]
        return ParamVector.from_values(sub, vals)


class SpecVector(_Vector):
    """Performance metrics of one block."""

    def _validate(self):
        schema = spec_schema(self.block)
        got = tuple((n, u) for n, _, u in self.values)
        if got != schema:
            raise SchemaError(f"{self.block} specs must be {_fmt_schema(schema)}, got {_fmt_schema(got)}")

    @classmethod
    def from_values(cls, block, values):
        schema = spec_schema(block)
        if isinstance(values, dict):
            missing = [n for n, _ in schema if n not in values]
            extra = [n for n in values if n not in dict(schema)]
            if missing or extra:
                raise SchemaError(f"{block}: missing specs {missing}, unexpected {extra}")
            values = [values[n] for n, _ in schema]
        values = list(values)
        if len(values) != len(schema):
            raise SchemaError(f"{block} expects {len(schema)} specs, got {len(values)}")
        return cls(block, tuple((n, float(v), u) for (n, u), v in zip(schema, values)))


def _fmt_schema(schema):
    return "[" + ", ".join(f"{n}[{u}]" for n, u in schema) + "]"


def _check_block(p, block):
    if p.block != block:
        raise SchemaError(f"expected a {block} parameter vector, got {p.block}")


def db10(x):
    return 10.0 * math.log10(x)


def db20(x):
    return 20.0 * math.log10(x)


def friis_received_power(pt, gt, gr, fc, d):
    """Free-space received power in W."""
    for name, v in (("pt", pt), ("gt", gt), ("gr", gr), ("fc", fc), ("d", d)):
        if not v > 0:
            raise DomainError(f"{name} must be > 0, got {v!r}")
    return pt * gt * gr * (SPEED_OF_LIGHT / (2 * math.pi * fc * d)) ** 2


def sensitivity(nf_db, delta_f, snr_out):
    """Minimum detectable input power in dBm."""
    if not delta_f > 0:
        raise DomainError(f"delta_f must be > 0, got {delta_f!r}")
    return -174.0 + nf_db + 10.0 * math.log10(delta_f) + snr_out


def friis_noise_factor(factors, gains):
    """Cascade noise factor (linear) from per-stage factors and available gains.

    ``gains`` needs one entry per stage except the last; extra entries are ignored.
    """
    factors = list(factors)
    if not factors:
        raise DomainError("at least one stage is required")
    gains = list(gains)
    if len(gains) < len(factors) - 1:
        raise DomainError("need an available gain for every stage but the last")
    total = factors[0]
    g = 1.0
    for f, ga in zip(factors[1:], gains):
        if not ga > 0:
            raise DomainError("available gains must be > 0")
        g *= ga
        total += (f - 1.0) / g
    return total


def rapp_output(p_in, gain, p_sat):
    """Soft-clipped (smoothness 1) output power in W for input power ``p_in`` in W."""
    lin = gain * p_in
    return lin / math.sqrt(1.0 + (lin / p_sat) ** 2)


def leeson_phase_noise(f_noise, kt, p_sig, omega0, q, d_omega, flicker_corner):
    """Leeson single-sideband phase noise in dBc/Hz."""
    return db10(
        2.0 * f_noise * kt / p_sig
        * (1.0 + (omega0 / (2.0 * q * d_omega)) ** 2)
        * (1.0 + flicker_corner / abs(d_omega))
    )


# --------------------------------------------------------------------------
# per-block cores; cached because system sweeps revisit the same sub-blocks

@lru_cache(maxsize=4096)
def _vco_core(values, dc, op):
    c, l, r_p, w_n1, w_n2, w_var = (v * UNIT_SCALE[u] for v, (_, u) in zip(values, BLOCK_PARAMS["vco"]))
    gm = dc.k_gm * w_n1
    if gm * r_p < 1.0:
        raise OscillationFailure(f"startup condition violated: gm*R_p = {gm * r_p:.6g} < 1")
    c_var1 = dc.k_var_min * w_var
    c_var2 = dc.k_var_max * w_var
    tuning_range = (1.0 / (2 * math.pi)) * (1.0 / math.sqrt(l * c)) * (c_var2 - c_var1) / (2.0 * c)
    omega0 = 1.0 / math.sqrt(l * (c + (c_var1 + c_var2) / 2.0))
    q = r_p / (omega0 * l)
    i_bias = dc.j_bias * w_n2
    v_sw = min((4.0 / math.pi) * i_bias * r_p, 1.2 * dc.vdd)
    p_sig = v_sw ** 2 / (2.0 * r_p)
    pn = leeson_phase_noise(1.0 + dc.gamma_noise, dc.kt, p_sig, omega0, q,
                            2 * math.pi * op.pn_offset, dc.flicker_corner)
    p_dc = dc.vdd * dc.j_bias * w_n2
    return pn, tuning_range, p_sig, p_dc


def _stage_voltage_gain(gm, l_p, l_s, dc, op):
    omega = 2 * math.pi * op.f_rf
    return gm * (omega * l_p * dc.q_xfmr) * dc.k_couple * math.sqrt(l_s / l_p)


@lru_cache(maxsize=4096)
def _pa_core(values, dc, op):
    l_ip, l_is, l_op, l_os, w_n1, w_n2 = (v * UNIT_SCALE[u] for v, (_, u) in zip(values, BLOCK_PARAMS["pa"]))
    av1 = _stage_voltage_gain(dc.k_gm * w_n1, l_ip, l_is, dc, op)
    av2 = _stage_voltage_gain(dc.k_gm * w_n2, l_op, l_os, dc, op)
    gain = (av1 * av2) ** 2
    p_dc = dc.vdd * dc.j_bias * 2.0 * (w_n1 + w_n2)
    p_sat = (2.0 / math.pi) * dc.j_bias * w_n2 * dc.vdd
    drain_eff = -math.inf
    pae = -math.inf
    for pin_dbm in op.pin_sweep_dbm():
        p_in = 1e-3 * 10.0 ** (pin_dbm / 10.0)
        p_out = rapp_output(p_in, gain, p_sat)
        drain_eff = max(drain_eff, p_out / p_dc * 100.0)
        pae = max(pae, (p_out - p_in) / p_dc * 100.0)
    return gain, drain_eff, pae, p_sat, p_dc


@lru_cache(maxsize=4096)
def _lna_core(values, dc, op):
    _c1, c2, l_d, l_g, l_s, w_n1, _w_n2 = (v * UNIT_SCALE[u] for v, (_, u) in zip(values, BLOCK_PARAMS["lna"]))
    omega = 2 * math.pi * op.f_rf
    gm = dc.k_gm * w_n1
    c_gs = dc.k_cgs * w_n1
    r_in = gm * l_s / c_gs
    x_in = omega * (l_g + l_s) - 1.0 / (omega * c_gs) - 1.0 / (omega * c2)
    z_in = complex(r_in, x_in)
    mag = abs(z_in - dc.z0) / abs(z_in + dc.z0)
    s11 = db20(mag) if mag > 0 else S11_FLOOR_DB
    s11 = max(s11, S11_FLOOR_DB)
    r_d_eff = omega * l_d * dc.q_ind
    wc = omega * c_gs
    g_t = 4.0 * dc.z0 * r_d_eff * gm ** 2 / (wc ** 2 * ((dc.z0 + r_in) ** 2 + x_in ** 2))
    if op.lna_gamma_s or op.lna_gamma_l:
        s11_c = (z_in - dc.z0) / (z_in + dc.z0)
        gs, gl = op.lna_gamma_s, op.lna_gamma_l
        # output port taken as matched (S22 = 0)
        g_t *= (1 - abs(gs) ** 2) / abs(1 - s11_c * gs) ** 2 * (1 - abs(gl) ** 2)
    f_lin = 1.0 + dc.gamma_noise * gm * dc.z0 * (wc / gm) ** 2
    return g_t, s11, f_lin, dc.vdd * dc.j_bias * 2.0 * w_n1


@lru_cache(maxsize=4096)
def _mixer_core(values, dc, op):
    c, r, w_n1, _w_n2 = (v * UNIT_SCALE[u] for v, (_, u) in zip(values, BLOCK_PARAMS["mixer"]))
    gm = dc.k_gm * w_n1
    a = (2.0 / math.pi) * gm * r
    f_c = 1.0 / (2 * math.pi * r * c)
    a_lp = a / math.sqrt(1.0 + (op.f_if / f_c) ** 2)
    i_ss = dc.j_bias * 2.0 * w_n1
    swing = min(2.0 * a_lp * op.mixer_vin_amp, 2.0 * i_ss * r)
    f_lin = 1.0 + dc.gamma_noise / (gm * dc.z0)
    return a_lp, swing, f_lin, dc.vdd * i_ss


@lru_cache(maxsize=4096)
def _cascode_core(values, dc):
    r_d, w_n1, _w_n2 = (v * UNIT_SCALE[u] for v, (_, u) in zip(values, BLOCK_PARAMS["cascode"]))
    gm = dc.k_gm * w_n1
    av = gm * r_d
    f_lin = 1.0 + dc.gamma_noise / (gm * dc.z0)
    return av, f_lin, dc.vdd * dc.j_bias * w_n1


def _call(core, *args):
    try:
        return core(*args)
    except (ValueError, ZeroDivisionError, OverflowError) as exc:
        raise DomainError(f"{core.__name__.strip('_')}: {exc}") from exc


def eval_vco(p, dc=None, op=None):
    dc, op = dc or DeviceConstants(), op or OperatingPoint()
    _check_block(p, "vco")
    pn, tr, _, _ = _call(_vco_core, p.as_tuple(), dc, op)
    return SpecVector.from_values("vco", [pn, tr])


def eval_pa(p, dc=None, op=None):
    dc, op = dc or DeviceConstants(), op or OperatingPoint()
    _check_block(p, "pa")
    gain, eta, pae, _, _ = _call(_pa_core, p.as_tuple(), dc, op)
    return SpecVector.from_values("pa", [db10(gain), eta, pae])


def eval_lna(p, dc=None, op=None):
    dc, op = dc or DeviceConstants(), op or OperatingPoint()
    _check_block(p, "lna")
    g_t, s11, f_lin, _ = _call(_lna_core, p.as_tuple(), dc, op)
    return SpecVector.from_values("lna", [db10(g_t), s11, db10(f_lin)])


def eval_mixer(p, dc=None, op=None):
    dc, op = dc or DeviceConstants(), op or OperatingPoint()
    _check_block(p, "mixer")
    a_lp, swing, _, _ = _call(_mixer_core, p.as_tuple(), dc, op)
    return SpecVector.from_values("mixer", [swing, db20(a_lp)])


def eval_cascode(p, dc=None, op=None):
    dc = dc or DeviceConstants()
    _check_block(p, "cascode")
    av, _, _ = _call(_cascode_core, p.as_tuple(), dc)
    return SpecVector.from_values("cascode", [db20(av)])


def eval_tx_system(p, dc=None, op=None):
    dc, op = dc or DeviceConstants(), op or OperatingPoint()
    _check_block(p, "tx_system")
    vals = p.as_tuple()
    n_vco = len(BLOCK_PARAMS["vco"])
    _, _, p_sig, p_dc_vco = _call(_vco_core, vals[:n_vco], dc, op)
    gain, _, _, p_sat, p_dc_pa = _call(_pa_core, vals[n_vco:], dc, op)
    # the VCO output power drives the PA input
    p_out = rapp_output(p_sig, gain, p_sat)
    return SpecVector.from_values("tx_system", [
        p_dc_vco + p_dc_pa,
        op.f_rf / dc.q_xfmr,
        db10(p_out / 1e-3),
        2.0 * math.sqrt(2.0 * dc.z0 * p_out),
    ])


def eval_rx_system(p, dc=None, op=None):
    dc, op = dc or DeviceConstants(), op or OperatingPoint()
    _check_block(p, "rx_system")
    vals = p.as_tuple()
    n_lna, n_mix = len(BLOCK_PARAMS["lna"]), len(BLOCK_PARAMS["mixer"])
    g_lna, _, f_lna, p_lna = _call(_lna_core, vals[:n_lna], dc, op)
    a_mix, _, f_mix, p_mix = _call(_mixer_core, vals[n_lna:n_lna + n_mix], dc, op)
    a_casc, f_casc, p_casc = _call(_cascode_core, vals[n_lna + n_mix:], dc)
    gain_db = db10(g_lna) + db20(a_mix) + db20(a_casc)
    f_total = friis_noise_factor([f_lna, f_mix, f_casc], [g_lna, a_mix ** 2])
    return SpecVector.from_values("rx_system", [p_lna + p_mix + p_casc, gain_db, db10(f_total)])


EVALUATORS = {
    "vco": eval_vco,
    "pa": eval_pa,
    "lna": eval_lna,
    "mixer": eval_mixer,
    "cascode": eval_cascode,
    "tx_system": eval_tx_system,
    "rx_system": eval_rx_system,
}


def evaluate(p, dc=None, op=None):
    """Dispatch to the evaluator of ``p.block``."""
    try:
        fn = EVALUATORS[p.block]
    except KeyError:
        raise SchemaError(f"no forward model for block {p.block!r}") from None
    return fn(p, dc, op)


def pa_sweep(p, dc=None, op=None):
    """Per-point ``(pin_dbm, pout_w, drain_eff, pae)`` over the PA input sweep."""
    dc, op = dc or DeviceConstants(), op or OperatingPoint()
    _check_block(p, "pa")
    gain, _, _, p_sat, p_dc = _pa_core(p.as_tuple(), dc, op)
    rows = []
    for pin_dbm in op.pin_sweep_dbm():
        p_in = 1e-3 * 10.0 ** (pin_dbm / 10.0)
        p_out = rapp_output(p_in, gain, p_sat)
        rows.append((pin_dbm, p_out, p_out / p_dc * 100.0, (p_out - p_in) / p_dc * 100.0))
    return rows


def rx_stage_figures(p, dc=None, op=None):
    """Linear noise factors and available gains of the three receiver stages."""
    dc, op = dc or DeviceConstants(), op or OperatingPoint()
    _check_block(p, "rx_system")
    vals = p.as_tuple()
    n_lna, n_mix = len(BLOCK_PARAMS["lna"]), len(BLOCK_PARAMS["mixer"])
    g_lna, _, f_lna, _ = _lna_core(vals[:n_lna], dc, op)
    a_mix, _, f_mix, _ = _mixer_core(vals[n_lna:n_lna + n_mix], dc, op)
    a_casc, f_casc, _ = _cascode_core(vals[n_lna + n_mix:], dc)
    return (f_lna, f_mix, f_casc), (g_lna, a_mix ** 2, a_casc ** 2)


# --------------------------------------------------------------------------
# flat key=value configuration

DEVICE_KEYS = tuple(f.name for f in dataclasses.fields(DeviceConstants))
OPERATING_KEYS = tuple(f.name for f in dataclasses.fields(OperatingPoint))


def parse_kv(text, source="<config>"):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise SchemaError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def constants_from_mapping(mapping, base_dc=None, base_op=None, allow_extra=()):
    """Apply string or numeric overrides to device constants and operating point.

    Unknown keys raise :class:`SchemaError` unless listed in ``allow_extra``.
    """
    dc_kw, op_kw = {}, {}
    for key, value in mapping.items():
        if key in allow_extra:
            continue
        if key in DEVICE_KEYS:
            target = dc_kw
        elif key in OPERATING_KEYS:
            target = op_kw
        else:
            raise SchemaError(f"unknown configuration key {key!r}")
        try:
            target[key] = float(value)
        except (TypeError, ValueError):
            raise SchemaError(f"configuration key {key!r}: not a number: {value!r}") from None
    dc = dataclasses.replace(base_dc or DeviceConstants(), **dc_kw)
    op = dataclasses.replace(base_op or OperatingPoint(), **op_kw)
    return dc, op


def load_config(path):
    """Read device constants and operating point from a key=value file."""
    with open(path, encoding="utf-8") as fh:
        return constants_from_mapping(parse_kv(fh.read(), str(path)))


def config_hash(dc, op):
    """Stable fingerprint of a simulator configuration."""
    items = [f"{k}={getattr(dc, k)!r}" for k in DEVICE_KEYS] + [f"{k}={getattr(op, k)!r}" for k in OPERATING_KEYS]
    return hashlib.sha256("\n".join(items).encode()).hexdigest()[:16]
