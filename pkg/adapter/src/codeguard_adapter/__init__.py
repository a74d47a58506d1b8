"""Subprocess adapter backing the codeguard wire protocol with real transformers."""

__all__ = ["AdapterError", "Session", "serve"]
__version__ = "0.1.0"


def __getattr__(name):
    # imported lazily so `python -m codeguard_adapter.server` starts clean
    if name in __all__:
        from . import server
        return getattr(server, name)
    raise AttributeError(name)
