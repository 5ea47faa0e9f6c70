from __future__ import annotations

from inspect import isclass
from typing import TYPE_CHECKING, List, Type, Union

from kernmix.exception import ConfigError

if TYPE_CHECKING:
    from kernmix.base.method import FitMethod


class MethodRegistry(dict):
    _singleton = None

    def __new__(cls, *args, **kwargs):
        if cls._singleton is None:
            cls.reset()
        return cls._singleton

    def register(self, method: Union[Type[FitMethod], FitMethod]) -> None:
        cls = method if isclass(method) else method.__class__
        self[cls.name] = method

    def resolve(self, method: Union[str, FitMethod]) -> FitMethod:
        """Turn a registered name into a usable method instance

        Raises:
            ConfigError: If no method is registered under the name
        """
        if not isinstance(method, str):
            return method
        if method not in self:
            raise ConfigError(
                f"Unknown method {method!r}. Registered: {self.names()}"
            )
        found = self[method]
        return found() if isclass(found) else found

    def names(self) -> List[str]:
        return sorted(self.keys())

    @classmethod
    def reset(cls):
        cls._singleton = super().__new__(cls)  # type: ignore
