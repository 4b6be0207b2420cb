"""OCEAN measurement scripts and the simulator adapter contract.

Measurement expressions cover the transmitter and receiver metrics; net
and path names are placeholders, bound by default to the names of the
reference testbench netlists. A simulator adapter turns a :class:`~mmsizing.rfmodel.ParamVector`
into a :class:`~mmsizing.rfmodel.SpecVector`, either with the analytic models
(:class:`AnalyticSimulator`) or by running an external command on an emitted
script (:class:`OceanSimulator`).
"""

from __future__ import annotations

import abc
import math
import os
import re
import string
import subprocess
import tempfile
from dataclasses import dataclass

from mmsizing import rfmodel
from mmsizing.errors import SchemaError, SimulationFailure


@dataclass(frozen=True)
class MeasurementTemplate:
    metric: str
    analysis: str
    block: str
    spec: str
    script: str

    def render(self, bindings):
        return _render(self.script, bindings, self.metric)


_GT = 'db10(gt(sp(1 1 ?result "sp") sp(1 2 ?result "sp") sp(2 1 ?result "sp") sp(2 2 ?result "sp")))'
_BW_CROSS = f'cross({_GT} (ymax({_GT}) - 3) 2 "either" t "time" nil)'
_MIX_DIFF = ("(vtime('tran \"{mixer_out_p}\") - vtime('tran \"{mixer_out_n}\") - "
             "(v(\"{mixer_out_p}\" ?result \"dcOp\") - v(\"{mixer_out_n}\" ?result \"dcOp\")))")

TX_TEMPLATES = (
    MeasurementTemplate("power_consumption", "dc", "tx_system", "dc_power",
                        'getData(":pwr" ?result "dcOp")'),
    MeasurementTemplate("bandwidth", "sp", "tx_system", "bandwidth",
                        f"(ymax({_BW_CROSS}) - ymin({_BW_CROSS}))"),
    MeasurementTemplate("output_power", "pss", "tx_system", "output_power",
                        "ymax(dbm(pvr('pss \"{out}\" \"{gnd}\" {load} '(1))))"),
    MeasurementTemplate("voltage_swing", "tran", "tx_system", "voltage_swing",
                        'ymax(v("{out}" ?result "tran")) - ymin(v("{out}" ?result "tran"))'),
    MeasurementTemplate("vco_tuning_range", "pss", "vco", "tuning_range",
                        "ymax(harmonic(xval(getData(\"{vco_out_p}\" ?result \"pss_fd\")) '1)) - "
                        "ymin(harmonic(xval(getData(\"{vco_out_p}\" ?result \"pss_fd\")) '1))"),
    MeasurementTemplate("vco_phase_noise", "pnoise", "vco", "phase_noise",
                        "value(leafValue(pn('pnoise) \"{vcont}\" {vcont_value}) {pn_offset})"),
    MeasurementTemplate("pa_power_gain", "pss", "pa", "power_gain",
                        "ymax(db10((pvi('pss \"{pa_out_p}\" \"{pa_out_n}\" \"{pa_out_term}\" 0 '(1)) / "
                        "(- pvi('pss \"{vco_out_p}\" \"{vco_out_n}\" \"{pa_in_term}\" 0 '1)))))"),
    MeasurementTemplate("pa_drain_efficiency", "pss", "pa", "drain_eff",
                        "ymax(((- (pvi('pss \"{pa_out_p}\" \"{pa_out_n}\" \"{pa_out_term}\" 0 '(1)) / "
                        "(- pvi('pss \"{supply_node}\" \"{gnd}\" \"{supply_term}\" 0 '0)))) * 100))"),
    MeasurementTemplate("pa_pae", "pss", "pa", "pae",
                        "ymax((- ((100.0 * harmonic((spectralPower(i(\"{pa_out_term}\" ?result \"pss_fd\") "
                        "(v(\"{pa_out_p}\" ?result \"pss_fd\") - v(\"{pa_out_n}\" ?result \"pss_fd\"))) + "
                        "spectralPower(i(\"{pa_in_term}\" ?result \"pss_fd\") "
                        "(v(\"{vco_out_p}\" ?result \"pss_fd\") - v(\"{vco_out_n}\" ?result \"pss_fd\")))) "
                        "'(1))) / (- harmonic(spectralPower(i(\"{supply_term}\" ?result \"pss_fd\") "
                        "(v(\"{supply_node}\" ?result \"pss_fd\") - 0.0)) '(0))))))"),
)

RX_TEMPLATES = (
    MeasurementTemplate("power_consumption", "dc", "rx_system", "dc_power",
                        'getData(":pwr" ?result "dcOp")'),
    MeasurementTemplate("voltage_gain", "pac", "rx_system", "gain",
                        "ymax(db(vh('pac \"{if_out}\" '-1)))"),
    MeasurementTemplate("noise_figure", "psp", "rx_system", "noise_figure",
                        'ymin(getData("NF" ?result "psp"))'),
    MeasurementTemplate("lna_power_gain", "qpss", "lna", "power_gain",
                        "ymax(db10((pvi('qpss \"{lna_out_p}\" \"{lna_out_n}\" \"{lna_out_term}\" 0) / "
                        "(- pvi('qpss \"{lna_in_p}\" \"{lna_in_n}\" \"{lna_in_term}\" 0 '(0 1))))))"),
    MeasurementTemplate("lna_noise_figure", "sp", "lna", "noise_figure",
                        'ymin(db10(getData("F" ?result "sp_noise")))'),
    MeasurementTemplate("lna_s11", "sp", "lna", "s11",
                        "ymin(db(spm('sp 1 1)))"),
    MeasurementTemplate("mixer_conversion_gain", "qpss", "mixer", "conversion_gain",
                        "ymax(db10((pvi('qpss \"{mixer_out_p}\" \"{mixer_out_n}\" \"{mixer_out_term}\" 0) / "
                        "(- pvi('qpss \"{mixer_in_p}\" \"{mixer_in_n}\" \"{mixer_in_term}\" 0 '(0 1))))))"),
    MeasurementTemplate("mixer_voltage_swing", "tran", "mixer", "voltage_swing",
                        f"(ymax({_MIX_DIFF}) - ymin({_MIX_DIFF})) / 2"),
    MeasurementTemplate("cascode_voltage_gain", "qpss", "cascode", "gain",
                        "ymax(db((vh('qpss \"{amp_out}\") / harmonic(vh('qpss \"{amp_in}\") '((-1 1))))))"),
)

TEMPLATES = {"tx": TX_TEMPLATES, "rx": RX_TEMPLATES}

ANALYSES = {
    "dc": "analysis('dc ?saveOppoint t)",
    "tran": "analysis('tran ?stop \"{tran_stop}\")",
    "sp": "analysis('sp ?ports list(\"{port_in}\" \"{port_out}\") ?start \"{sp_start}\" ?stop \"{sp_stop}\" ?donoise \"yes\")",
    "pss": "analysis('pss ?fund \"{f_fund}\" ?harms \"{harms}\" ?errpreset \"conservative\")",
    "pnoise": "analysis('pnoise ?start \"{pn_start}\" ?stop \"{pn_stop}\" ?p \"{vco_out_p}\" ?n \"{vco_out_n}\")",
    "pac": "analysis('pac ?start \"{pac_start}\" ?stop \"{pac_stop}\")",
    "psp": "analysis('psp ?ports list(\"{port_in}\" \"{port_out}\") ?donoise \"yes\")",
    "qpss": "analysis('qpss ?funds list(\"{lo_source}\" \"{rf_source}\") ?maxharms list({lo_harms} {rf_harms}))",
}
ANALYSIS_ORDER = ("dc", "tran", "sp", "pss", "pnoise", "qpss", "pac", "psp")

_COMMON = {
    "netlist": "./netlist",
    "results_dir": "./results",
    "gnd": "/gnd!",
    "tran_stop": "2n",
    "port_in": "/PORT0",
    "port_out": "/PORT1",
    "sp_start": "1G",
    "sp_stop": "60G",
    "harms": "5",
}

DEFAULT_BINDINGS = {
    "tx": {
        **_COMMON,
        "out": "/OUT",
        "load": "50.0",
        "vco_out_p": "/VCO_OUT+",
        "vco_out_n": "/VCO_OUT-",
        "pa_out_p": "/net7",
        "pa_out_n": "/net4",
        "pa_out_term": "/I19/Vout+",
        "pa_in_term": "/I19/Vin+",
        "supply_node": "/net8",
        "supply_term": "/V1/PLUS",
        "vcont": "Vcont",
        "vcont_value": "0.6",
        "pn_offset": "1000000",
        "pn_start": "1k",
        "pn_stop": "100M",
        "f_fund": "28G",
    },
    "rx": {
        **_COMMON,
        "if_out": "/IF_OUT",
        "lna_out_p": "/LNA_OUT+",
        "lna_out_n": "/LNA_OUT-",
        "lna_out_term": "/I0/Vout+",
        "lna_in_p": "/LNA_IN+",
        "lna_in_n": "/LNA_IN-",
        "lna_in_term": "/I0/Vin+",
        "mixer_out_p": "/Mixer_OUT+",
        "mixer_out_n": "/Mixer_OUT-",
        "mixer_out_term": "/I1/IF+",
        "mixer_in_p": "/Mixer_IN+",
        "mixer_in_n": "/Mixer_IN-",
        "mixer_in_term": "/I1/RF+",
        "amp_out": "/Amp_OUT+",
        "amp_in": "/Amp_IN+",
        "lo_source": "LO",
        "rf_source": "RF",
        "lo_harms": "5",
        "rf_harms": "2",
        "pac_start": "10M",
        "pac_stop": "1G",
        "f_fund": "27.9G",
    },
}

# netlist value suffix per table unit
UNIT_SUFFIX = {"fF": "f", "pF": "p", "pH": "p", "um": "u", "Ohm": ""}

_SYSTEM_OF = {"vco": "tx", "pa": "tx", "tx_system": "tx",
              "lna": "rx", "mixer": "rx", "cascode": "rx", "rx_system": "rx"}


def _render(text, bindings, where):
    fields = {f for _, f, _, _ in string.Formatter().parse(text) if f}
    missing = sorted(fields - set(bindings))
    if missing:
        raise SchemaError(f"{where}: unbound placeholder(s) {missing}")
    return text.format(**bindings)


def system_of(block):
    try:
        return _SYSTEM_OF[block]
    except KeyError:
        raise SchemaError(f"unknown block {block!r}") from None


def templates(system):
    try:
        return TEMPLATES[system]
    except KeyError:
        raise SchemaError(f"unknown system {system!r}; expected 'tx' or 'rx'") from None


def metric_names(system):
    return [t.metric for t in templates(system)]


def metrics_for_block(block):
    """Measurement names whose results form ``block``'s spec vector."""
    by_spec = {t.spec: t.metric for t in templates(system_of(block)) if t.block == block}
    return [by_spec[name] for name, _ in rfmodel.spec_schema(block)]


def render_measurement(system, metric, bindings=None):
    """The bare measurement expression of one metric."""
    table = templates(system)
    merged = {**DEFAULT_BINDINGS[system], **(bindings or {})}
    for t in table:
        if t.metric == metric:
            return t.render(merged)
    raise SchemaError(f"unknown {system} metric {metric!r}; valid: {', '.join(metric_names(system))}")


def _netlist_name(name):
    return name.replace(".", "_")


def format_value(value, unit):
    """Netlist literal of a table-unit value, e.g. ``50f`` for 50 fF."""
    text = f"{value:.15g}"
    return text + UNIT_SUFFIX[unit]


def emit_param_alter(p):
    """One ``desVar`` line per parameter, in schema order."""
    return "".join(f'desVar("{_netlist_name(n)}" {format_value(v, u)})\n' for n, v, u in p.values)


def emit_script(system, metrics, bindings=None, params=None):
    """Complete OCEAN script measuring ``metrics`` of the ``tx`` or ``rx`` system.

    ``params`` (a ParamVector) adds design-variable assignments after the
    netlist load. Results are printed as ``<block>.<spec> = <value>`` lines.
    """
    table = {t.metric: t for t in templates(system)}
    unknown = [m for m in metrics if m not in table]
    if unknown:
        raise SchemaError(f"unknown {system} metric(s) {unknown}; valid: {', '.join(table)}")
    b = {**DEFAULT_BINDINGS[system], **(bindings or {})}
    chosen = [table[m] for m in dict.fromkeys(metrics)]
    lines = [
        f"; OCEAN measurement script ({system})",
        "simulator('spectre)",
        _render('design("{netlist}")', b, "preamble"),
        _render('resultsDir("{results_dir}")', b, "preamble"),
    ]
    if params is not None:
        lines += emit_param_alter(params).splitlines()
    kinds = {t.analysis for t in chosen}
    if "tran" in kinds and any(t.metric == "mixer_voltage_swing" for t in chosen):
        kinds.add("dc")
    for kind in ANALYSIS_ORDER:
        if kind in kinds:
            lines.append(_render(ANALYSES[kind], b, f"analysis {kind}"))
    if chosen:
        lines.append("run()")
    for t in chosen:
        lines.append(f"{t.metric} = {t.render(b)}")
    for t in chosen:
        lines.append(f'printf("{t.block}.{t.spec} = %.17g\\n" {t.metric})')
    lines.append("exit()")
    return "\n".join(lines) + "\n"


def format_results(specs):
    """Print a SpecVector in the epilogue's ``name = value`` format."""
    return "".join(f"{n} = {v!r}\n" for n, v, _ in specs.values)


_RESULT_LINE = re.compile(r"^\s*([A-Za-z_][\w.]*)\s*=\s*(\S+)\s*$")


def parse_results(text, block):
    """Collect ``block``'s specs from simulator output.

    Names may be bare (``gain``) or block-qualified (``cascode.gain``); lines
    that do not look like assignments are ignored.
    """
    wanted = [n for n, _ in rfmodel.spec_schema(block)]
    found = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        m = _RESULT_LINE.match(line)
        if not m:
            continue
        name, raw = m.groups()
        if "." in name:
            owner, name = name.rsplit(".", 1)
            if owner != block:
                continue
        if name not in wanted:
            continue
        try:
            value = float(raw)
        except ValueError:
            raise SchemaError(f"line {lineno}: cannot parse value {raw!r} for {name}") from None
        if not math.isfinite(value):
            raise SchemaError(f"line {lineno}: non-finite value for {name}")
        found[name] = value
    missing = [n for n in wanted if n not in found]
    if missing:
        raise SchemaError(f"missing result(s) for {block}: {', '.join(missing)}")
    return rfmodel.SpecVector.from_values(block, [found[n] for n in wanted])


# --------------------------------------------------------------------------
# adapters

class SimulatorAdapter(abc.ABC):
    """Maps parameters to specifications for a set of supported blocks."""

    blocks = ()
    config_hash = None

    def supports(self, block):
        return block in self.blocks

    @abc.abstractmethod
    def run(self, p):
        """Return the SpecVector of ``p``; raise a SizingError on failure."""


class AnalyticSimulator(SimulatorAdapter):
    """Stand-in simulator backed by the closed-form models."""

    blocks = rfmodel.BLOCKS

    def __init__(self, dc=None, op=None):
        self.dc = dc or rfmodel.DeviceConstants()
        self.op = op or rfmodel.OperatingPoint()
        self.config_hash = rfmodel.config_hash(self.dc, self.op)

    def run(self, p):
        return rfmodel.evaluate(p, self.dc, self.op)


class OceanSimulator(SimulatorAdapter):
    """Runs ``command <script path>`` and parses its standard output.

    A nonzero exit status is reported as :class:`SimulationFailure`.
    """

    blocks = rfmodel.BLOCKS

    def __init__(self, command, bindings=None, workdir=None, timeout=None, config_hash=None):
        self.command = list(command)
        self.bindings = dict(bindings or {})
        self.workdir = workdir
        self.timeout = timeout
        self.config_hash = config_hash

    def script_for(self, p):
        system = system_of(p.block)
        return emit_script(system, metrics_for_block(p.block), self.bindings, params=p)

    def run(self, p):
        script = self.script_for(p)
        fd, path = tempfile.mkstemp(suffix=".ocn", dir=self.workdir, text=True)
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(script)
            try:
                proc = subprocess.run(self.command + [path], capture_output=True, text=True,
                                      timeout=self.timeout)
            except (OSError, subprocess.TimeoutExpired) as exc:
                raise SimulationFailure(f"simulator could not run: {exc}") from exc
        finally:
            os.remove(path)
        if proc.returncode != 0:
            raise SimulationFailure(f"simulator exited with status {proc.returncode}: {proc.stderr.strip()}")
        try:
            return parse_results(proc.stdout, p.block)
        except SchemaError as exc:
            raise SimulationFailure(f"unusable simulator output: {exc}") from exc
