"""Verification toolchain for hybrid active objects.

Subpackages and modules:

- ``habs.dl``          differential dynamic logic core and archive rendering
- ``habs.lang``        lexer, parser, AST, normalization and type checking
- ``habs.analysis``    post-region generators and supporting static analyses
- ``habs.vcg``         translation to dL and proof-obligation emission
- ``habs.sim``         executable operational semantics and trace monitoring
- ``habs.concurrent``  the guarded-procedure model over one global ODE
- ``habs.cli``         the ``habs`` command line front end
"""

__version__ = "0.1.0"
