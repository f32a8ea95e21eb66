"""UI module initialization"""

from .terminal import TerminalUI

__all__ = ['TerminalUI']
