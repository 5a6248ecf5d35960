"""Exterior differential systems for u_xy = F(x, y, u, u_x, u_y).

Modules:

* ``symcore``: expression parsing, printing, normal form, zero test, evaluation
* ``exterior``: differential forms on a coordinate chart
* ``pfaff``: Pfaffian systems and derived flags
* ``mongeampere``: characteristic systems, prolongation, integrability verdicts
* ``backlund``: transformations to the wave equation and auto-transformations
* ``numerics``: propagation of solutions through a transformation on a grid
* ``catalog``, ``problem``, ``cli``: built-in equations, problem files, command line
"""
from __future__ import annotations

__version__ = "0.1.0"
