"""Synthesis of certified switching controllers for polynomial systems.

The pipeline: model loading (:mod:`clfsynth.plant`, :mod:`clfsynth.catalog`),
moment relaxation (:mod:`clfsynth.relax`), the candidate/check alternation
(:mod:`clfsynth.candidate`, :mod:`clfsynth.sdp`, :mod:`clfsynth.engine`),
dwell-time bounds (:mod:`clfsynth.phi`), closed-loop simulation
(:mod:`clfsynth.sim`), and the command line (:mod:`clfsynth.cli`).
"""

from .engine import Certificate, SynthesisConfig, SynthesisResult, synthesize
from .plant import ControlAffinePlant, SwitchedPlant, load_model
from .catalog import load_benchmark
from .poly import Box, Monomial, Polynomial

__all__ = [
    "Box",
    "Certificate",
    "ControlAffinePlant",
    "Monomial",
    "Polynomial",
    "SwitchedPlant",
    "SynthesisConfig",
    "SynthesisResult",
    "load_benchmark",
    "load_model",
    "synthesize",
]

__version__ = "0.1.0"
