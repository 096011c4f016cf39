"""
Emotion category lists and rating scales of the two reference video datasets.

The category order is the order in which the categories appear in the rating
prompt, which is also the column order used for model responses.
"""

KOIDE_MAJIMA_SCALE = 100.0
"""Continuous slider ratings, 0 (not matched at all) to 100 (perfectly matched)."""

KOIDE_MAJIMA_CATEGORIES = (
    'love', 'amusement', 'craving', 'joy', 'nostalgia', 'boredom', 'calmness', 'relief',
    'romance', 'sadness', 'admiration', 'aesthetic appreciation', 'awe', 'confusion',
    'entrancement', 'interest', 'satisfaction', 'excitement', 'sexual desire', 'surprise',
    'nervousness', 'tension', 'anger', 'anxiety', 'awkwardness', 'disgust', 'empathic pain',
    'fear', 'horror', 'laughing', 'happiness', 'friendliness', 'ridiculousness', 'affection',
    'liking', 'shedding tears', 'emotional hurt', 'sympathy', 'lethargy', 'empathy',
    'compassion', 'curiousness', 'unrest', 'exuberance', 'appreciation of beauty', 'fever',
    'scare', 'daze', 'positive-expectation', 'throb', 'sexiness', 'indecency', 'embarrassment',
    'oddness', 'contempt', 'alertness', 'eeriness', 'positive-emotion', 'vigor', 'longing',
    'tenderness', 'pensiveness', 'melancholy', 'relaxedness', 'acceptance', 'unease',
    'negative-emotion', 'hostility', 'levity', 'protectiveness', 'elation', 'coolness',
    'cuteness', 'attachment', 'encouragement', 'annoyance', 'positive-fear', 'aggressiveness',
    'distress', 'stress',
)

COWEN_KELTNER_RESPONSE_SCALE = 9.0
"""Model responses for the proportion dataset use a 0-9 scale ..."""

COWEN_KELTNER_DIVISOR = 10.0
"""... and are divided by 10 to land in the 0-1 range of the human proportions."""

COWEN_KELTNER_SCALE = 1.0

COWEN_KELTNER_CATEGORIES = (
    'Admiration', 'Adoration', 'Aesthetic Appreciation', 'Amusement', 'Anger', 'Anxiety',
    'Awe', 'Awkwardness', 'Boredom', 'Calmness', 'Confusion', 'Contempt', 'Craving',
    'Disappointment', 'Disgust', 'Empathic Pain', 'Entrancement', 'Envy', 'Excitement',
    'Fear', 'Guilt', 'Horror', 'Interest', 'Joy', 'Nostalgia', 'Pride', 'Relief', 'Romance',
    'Sadness', 'Satisfaction', 'Sexual Desire', 'Surprise', 'Sympathy', 'Triumph',
)

DATASETS = {
    'koide-majima': (KOIDE_MAJIMA_CATEGORIES, KOIDE_MAJIMA_SCALE, None),
    'cowen-keltner': (COWEN_KELTNER_CATEGORIES, COWEN_KELTNER_RESPONSE_SCALE, COWEN_KELTNER_DIVISOR),
}
"""dataset name -> (categories, response scale, divisor or None) for parsing model output"""
