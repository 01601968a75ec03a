import pytest

from mirt import kernels


def test_python_fallback_always_available():
    assert "python" in kernels.available()
    assert kernels.get("python").BACKEND == "python"


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get("fortran")


def test_environment_override(monkeypatch):
    monkeypatch.setenv("MIRT_BACKEND", "python")
    assert kernels.default_name() == "python"


def test_compiled_is_default_when_built(monkeypatch):
    monkeypatch.delenv("MIRT_BACKEND", raising=False)
    expected = "cython" if "cython" in kernels.available() else "python"
    assert kernels.default_name() == expected
