"""Benchmark problems and solver settings from JSON documents."""
from __future__ import annotations

import json
from dataclasses import fields

import numpy as np

from ..errors import ConfigurationError
from ..geometry import Pose2
from ..kinematics import joint_frames, load_robot_model
from .models import base_drive_problem, base_reference, double_integrator_problem, whole_body_hold_problem
from .problem import LinearDynamics, OCProblem, QuadraticCost, SLQSettings


def settings_from_dict(doc):
    names = {f.name for f in fields(SLQSettings)}
    unknown = set(doc) - names
    if unknown:
        raise ConfigurationError(f"unknown solver settings: {sorted(unknown)}")
    doc = dict(doc)
    if "line_search" in doc:
        doc["line_search"] = tuple(float(a) for a in doc["line_search"])
    return SLQSettings(**doc)


def problem_from_dict(doc):
    """Build a problem from ``{"kind": ..., ...}``.

    Kinds: ``lq`` (A, B, Q, R, Qf, x0, N, dt), ``double_integrator`` (N, dt,
    x0), ``unicycle`` (goal, N, dt) and ``whole_body_hold`` (q0, move,
    drive_time, turn_time, N, dt, model).  An optional ``settings`` object is
    applied to every kind.
    """
    doc = dict(doc)
    kind = doc.pop("kind", None)
    settings = settings_from_dict(doc.pop("settings", {}))
    doc.pop("name", None)
    if kind == "lq":
        A = np.atleast_2d(np.asarray(doc["A"], dtype=float))
        B = np.atleast_2d(np.asarray(doc["B"], dtype=float))
        cost = QuadraticCost(doc["Q"], doc["R"], doc.get("Qf"))
        pr = OCProblem(LinearDynamics(A, B, doc.get("dt", 1.0)), cost, np.asarray(doc["x0"], dtype=float), int(doc["N"]))
    elif kind == "double_integrator":
        pr = double_integrator_problem(int(doc.get("N", 50)), float(doc.get("dt", 0.1)), tuple(doc.get("x0", (1.0, 0.0))))
    elif kind == "unicycle":
        dt = float(doc.get("dt", 0.01))
        goal = Pose2(*doc.get("goal", (1.0, 0.5, 0.0)))
        ref = base_reference(Pose2(), goal, float(doc.get("drive_time", 2.0)), float(doc.get("turn_time", 1.0)), dt, 0.5)
        N = int(doc.get("N", ref.shape[0] - 1))
        pr = base_drive_problem(np.zeros(3), ref, dt, horizon=N)
    elif kind == "whole_body_hold":
        model = load_robot_model(doc.get("model"))
        dt = float(doc.get("dt", 0.01))
        q0 = np.asarray(doc.get("q0", (0.0, 0.35, 0.25, 0.0, -0.6, 0.0)), dtype=float)
        x0 = np.r_[0.0, 0.0, 0.0, q0]
        p = joint_frames(model, x0[None, :3], q0[None])[0, -1, :3, 3]
        ref = base_reference(Pose2(), Pose2(*doc.get("move", (1.0, 0.0, np.pi / 2))),
                             float(doc.get("drive_time", 4.0)), float(doc.get("turn_time", 4.0)), dt, 1.0)
        N = doc.get("N")
        pr = whole_body_hold_problem(model, x0, p, ref, dt, horizon=None if N is None else int(N))
    else:
        raise ConfigurationError(f"unknown benchmark problem kind {kind!r}")
    pr.settings = settings
    return pr


def load_problems(path):
    """``{name: problem}`` from a JSON file holding a list of problem documents."""
    try:
        with open(path) as fh:
            docs = json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"benchmark file not found: {path}") from None
    return {d.get("name", f"problem_{i}"): problem_from_dict(d) for i, d in enumerate(docs)}
