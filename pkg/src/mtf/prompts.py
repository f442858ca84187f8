"""Prompt text for the four scoring tasks and the two reasoning-order modes.

The bodies and suffixes are fixed verbatim; scoring behavior depends on the
model seeing exactly these instructions, so do not reflow or "fix" them.
"""

from enum import Enum

from .core import Metric


class Mode(str, Enum):
    RATIONALIZATION = "rationalization"  # score first, explanation after
    COT = "cot"                          # reasoning first, score on the last line

    def __str__(self) -> str:
        return self.value


class TeacherPath(str, Enum):
    VISION = "vision"          # the model sees the image
    TEXT_ONLY = "text_only"    # a dense caption stands in for the image

    def __str__(self) -> str:
        return self.value


PROMPT_BODIES = {
    Metric.ITM: (
        "Please evaluate if the provided text caption accurately represents the main "
        "features and objects of the image. The caption doesn't need to detail every "
        "aspect of the image, but it should capture its primary theme. Rate the overall "
        "quality of the text caption's match to the image on a scale of 1-100, "
        "considering the criteria mentioned."
    ),
    Metric.ODF: (
        "Please evaluate the text caption to determine if it provides detailed "
        "descriptions of objects that align with the image description. Specifically, "
        "assess if the caption sufficiently describes the color, size, position, shape, "
        "material, etc., of the objects. Afterward, rate the caption's overall accuracy "
        "in capturing object details from the image on a scale of 1-100, based on the "
        "criteria provided."
    ),
    Metric.CTQ: (
        "Please evaluate the text caption based on the following criteria: Grammatical "
        "Correctness, Diversity of Vocabulary (e.g., the range and uniqueness of words "
        "used), Fluency (e.g., smoothness and natural flow of sentences), Readability, "
        "Length, and Structure. Assign an overall quality score on a scale of 1-100."
    ),
    Metric.SU: (
        "Please evaluate the given text caption in relation to its corresponding image "
        "description. Your goal is to determine if the text caption provides additional "
        "semantic information that isn't readily apparent just from the image itself.\n"
        "\n"
        "For example:\n"
        "\n"
        '1. If the image description mentions "a man" but the caption elaborates he is '
        'a "homeless man" or a "businessman," then the caption is enriching the '
        "semantic context.\n"
        "\n"
        "2. If the caption introduces concepts like the mathematical tangent function, "
        "which require in-depth knowledge to deduce, it is imparting external "
        "semantics.\n"
        "\n"
        "3. Captions revealing specific location addresses, festival details, or other "
        "nuanced data not easy to infer from the image also provide external semantic "
        "information.\n"
        "\n"
        "4. Directly identifying specific entities in the image such as buildings, "
        "people, bird species, animal breeds, car models, engines, etc., in the caption "
        "introduces additional insights.\n"
        "\n"
        "5. Should the image act as a contextual backdrop and the caption describes "
        "elements not explicitly showcased in the image, it has semantic depth.\n"
        "\n"
        "6. Lastly, if the caption depicts relationships between the subjects in the "
        "image, which need commonsense knowledge to understand, it should be considered "
        "semantically rich.\n"
        "\n"
        "Please assess and determine the extent of semantic enrichment the caption "
        "provides over the image description. Rate the text caption's semantic depth "
        "on a scale from 1 to 100."
    ),
}

MODE_SUFFIXES = {
    Mode.COT: (
        "Please think step by step to first output your reasons to give such a score. "
        "In the subsequent line, please output a single line containing the value "
        "indicating the scores."
    ),
    Mode.RATIONALIZATION: (
        "Please first output a single line containing the value indicating the scores. "
        "In the subsequent line, please provide a comprehensive explanation of your "
        "evaluation, avoiding any potential bias."
    ),
}

DENSE_CAPTION_PROMPT = (
    "Please generate a dense caption in 4-6 sentences for describing the image in "
    "detail as much as you can"
)
