from dataclasses import dataclass

from kernmix.base.hydrator import Hydrator
from kernmix.base.model import Event


@dataclass
class Setting:
    name: str
    value: float


def test_fallback_is_dict():
    data = {"h_mu": 5.0}

    hydrated = Hydrator().hydrate(data)

    assert hydrated == data
    assert hydrated is not data


def test_keyword_model():
    hydrated = Hydrator().hydrate({"name": "tol", "value": 1e-6}, Setting)

    assert hydrated == Setting("tol", 1e-6)


def test_from_dict_model():
    event = Event("ridge", "lifted", time=3.0, cluster=1)

    assert Hydrator().hydrate(event.to_dict(), Event) == event


def test_scalar_model():
    assert Hydrator().hydrate("2", int) == 2


def test_many():
    rows = [{"name": "a", "value": 1}, {"name": "b", "value": 2}]

    assert Hydrator().many(rows, Setting) == [
        Setting("a", 1),
        Setting("b", 2),
    ]


def test_custom_fallback():
    class SettingHydrator(Hydrator):
        fallback = Setting

    hydrated = SettingHydrator().hydrate({"name": "K", "value": 2})

    assert isinstance(hydrated, Setting)
