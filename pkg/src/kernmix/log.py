import logging

logger = logging.getLogger("kernmix")
