from .dataset import (
    REFERENCES_PER_STORY,
    STORY_LENGTH,
    DatasetManifest,
    StoryConfig,
    StorySample,
    build_story,
    generate_dataset,
    load_manifest,
    load_story,
)
from .grammar import (
    GRAMMAR_VERSION,
    PRONOUNS,
    UnknownEntityError,
    count_references,
    follow_sentence,
    inject_coreferences,
    opening_sentence,
    split_words,
)
from .render import background_texture, render_frame, sprite_mask
from .specs import (
    ACTIONS,
    BACKGROUND_BY_NAME,
    BACKGROUNDS,
    CHARACTER_BY_NAME,
    CHARACTERS,
    FRAME_SIZE,
    BackgroundSpec,
    CharacterSpec,
    SceneState,
    SceneValidationError,
)

__all__ = [
    "ACTIONS",
    "BACKGROUND_BY_NAME",
    "BACKGROUNDS",
    "CHARACTER_BY_NAME",
    "CHARACTERS",
    "FRAME_SIZE",
    "GRAMMAR_VERSION",
    "PRONOUNS",
    "REFERENCES_PER_STORY",
    "STORY_LENGTH",
    "BackgroundSpec",
    "CharacterSpec",
    "DatasetManifest",
    "SceneState",
    "SceneValidationError",
    "StoryConfig",
    "StorySample",
    "UnknownEntityError",
    "background_texture",
    "build_story",
    "count_references",
    "follow_sentence",
    "generate_dataset",
    "inject_coreferences",
    "load_manifest",
    "load_story",
    "opening_sentence",
    "render_frame",
    "split_words",
    "sprite_mask",
]
