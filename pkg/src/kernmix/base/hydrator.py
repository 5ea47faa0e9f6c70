from inspect import Parameter
from typing import Any, Dict, List, Type, Union


class Hydrator:
    """Object responsible for casting stored documents into models"""

    fallback: Type[object] = dict
    """The model type that will be used if there is none passed in the
    hydrate method"""

    def many(
        self, data: List[Dict[str, Any]], model: Type[object]
    ) -> List[Any]:
        return [self.hydrate(row, model=model) for row in data]

    def hydrate(
        self,
        data: Union[Dict[str, Any], Any],
        model: Type[object] = Parameter.empty,
    ):
        """Perform casting operation

        Models with a `from_dict` classmethod build themselves from the
        document; anything else is called with the document as keyword
        arguments.

        Args:
            data (Dict[str, Any]): A decoded JSON object
            model (Type[object], optional): The model that will do the
                casting. If no value is passed, it will use whatever the
                Hydrator's fallback value is set to. Defaults to
                `Parameter.empty`.

        Returns:
            Any: The data cast into the model
        """
        if model is Parameter.empty:
            model = self.fallback
        if model is dict:
            return dict(data)
        if model in (str, int, float, bool):
            return model(data)
        from_dict = getattr(model, "from_dict", None)
        if from_dict is not None:
            return from_dict(data)
        return model(**data)
