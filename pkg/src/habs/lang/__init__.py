"""Front end: lexer, parser, AST, normalization and type checking."""

from .ast import HabsProgram, ClassDecl, MethodDecl, PhysDecl  # noqa: F401
from .lexer import HabsSyntaxError  # noqa: F401
from .normalize import HabsNameError, normalize  # noqa: F401
from .parser import parse_expression, parse_program  # noqa: F401
from .printer import print_program  # noqa: F401
from .typecheck import Diagnostic, check_types  # noqa: F401
