from __future__ import annotations

from typing import Dict, Optional

__all__ = [
    "ContractError",
    "DomainError",
    "FskBitEnergyError",
    "NumericalError",
]


class FskBitEnergyError(Exception):
    """Base de todos os erros do pacote."""


class DomainError(FskBitEnergyError, ValueError):
    """Argumento fora do dominio da operacao."""


class ContractError(FskBitEnergyError, ValueError):
    """Chamada viola o contrato (tipo de canal errado, matriz nao estocastica)."""


class NumericalError(FskBitEnergyError, RuntimeError):
    def __init__(self, message: str, diagnostics: Optional[Dict[str, object]] = None) -> None:
        super().__init__(message)
        self.diagnostics: Dict[str, object] = dict(diagnostics or {})

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        details = ", ".join(f"{key}={value}" for key, value in self.diagnostics.items())
        return f"{base} ({details})"
