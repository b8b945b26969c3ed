# SPDX-License-Identifier: GPL-2.0-or-later
"""
Run-config files: one `key = value` per line, `#` starts a comment line. Keys are CLI
flag names with dashes turned into underscores. Values are evaluated as arithmetic
expressions where possible (`5 * 10**-2`), anything else stays a string.
"""
import ast
import dataclasses

import simpleeval

from constants import WEIGHT_DECAY
from hebbian.hpca import HpcaConfig
from trainer.protocol import ExperimentConfig
from trainer.sgd import SgdConfig

SGD_PREFIX = "sgd_"
HPCA_PREFIX = "hpca_"

NAMES = {"true": True, "false": False}


class RunConfigError(ValueError):
    pass


def _operators():
    ops = simpleeval.DEFAULT_OPERATORS.copy()
    # no bitwise or comparison syntax in config values
    for op in (ast.BitOr, ast.BitXor, ast.BitAnd, ast.Eq, ast.NotEq, ast.Gt, ast.Lt, ast.GtE, ast.LtE):
        ops.pop(op, None)
    return ops


OPERATORS = _operators()


def parse_value(text):
    text = text.strip()
    try:
        value = simpleeval.simple_eval(text, names=NAMES, functions={}, operators=OPERATORS)
    except (simpleeval.InvalidExpression, SyntaxError, KeyError):
        return text
    except (ArithmeticError, TypeError) as e:
        raise RunConfigError("cannot evaluate {!r}: {}".format(text, e))
    if isinstance(value, (bool, int, float, str)):
        return value
    return text


def format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_run_text(text, source="<run>"):
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise RunConfigError("{}:{}: expected key = value, got {!r}".format(source, lineno, line))
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        if not key:
            raise RunConfigError("{}:{}: empty key".format(source, lineno))
        values[key] = parse_value(value)
    return values


def format_run_text(values):
    lines = []
    for key in sorted(values):
        if values[key] is None:
            continue
        lines.append("{} = {}".format(key, format_value(values[key])))
    return "\n".join(lines) + "\n"


def read_run_file(path):
    with open(path) as inf:
        return parse_run_text(inf.read(), path)


def write_run_file(path, values):
    with open(path, "w") as outf:
        outf.write(format_run_text(values))


def _prefixed(cls, prefix, values, overrides=None):
    kwargs = dict(overrides or {})
    for field in dataclasses.fields(cls):
        key = prefix + field.name
        if values.get(key) is not None:
            kwargs[field.name] = values[key]
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise RunConfigError(str(e))


def sgd_config(values):
    """ SgdConfig from sgd_* keys; weight decay defaults per dataset """
    overrides = {}
    if values.get("dataset") in WEIGHT_DECAY:
        overrides["weight_decay"] = WEIGHT_DECAY[values["dataset"]]
    return _prefixed(SgdConfig, SGD_PREFIX, values, overrides)


def hpca_config(values):
    return _prefixed(HpcaConfig, HPCA_PREFIX, values)


def experiment_config(values):
    kwargs = {"sgd": sgd_config(values), "hpca": hpca_config(values)}
    for key in ("network", "database", "pretrain_samples", "selection_samples"):
        if values.get(key) is not None:
            kwargs[key] = values[key]
    try:
        return ExperimentConfig(**kwargs)
    except ValueError as e:
        raise RunConfigError(str(e))


def config_keys():
    """ Every sgd_* / hpca_* key with its dataclass default """
    keys = {}
    for cls, prefix in ((SgdConfig, SGD_PREFIX), (HpcaConfig, HPCA_PREFIX)):
        for field in dataclasses.fields(cls):
            keys[prefix + field.name] = field.default
    return keys
