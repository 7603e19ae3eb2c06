"""Regenerate src/emofed/data/emoji_categories.csv from the iamcal emoji-data set.

Requires ``emoji-data-python`` (dev-only); the runtime package reads the CSV.
"""
import csv
import sys
from pathlib import Path

import emoji_data_python

CATEGORY_NAMES = {
    "Smileys & Emotion": "SmileysEmotion",
    "People & Body": "PeopleBody",
    "Component": "Component",
    "Animals & Nature": "AnimalsNature",
    "Food & Drink": "FoodDrink",
    "Travel & Places": "TravelPlaces",
    "Activities": "Activities",
    "Objects": "Objects",
    "Symbols": "Symbols",
    "Flags": "Flags",
}


def rows():
    seen = {}
    for entry in emoji_data_python.emoji_data:
        category = CATEGORY_NAMES[entry.category]
        sequences = [entry.unified, *entry.variations]
        for skin in (entry.skin_variations or {}).values():
            sequences.append(skin.unified)
        for seq in sequences:
            seq = seq.upper()
            if seen.setdefault(seq, category) != category:
                raise ValueError(f"conflicting category for {seq}")
    return sorted(seen.items())


def main(out: str) -> None:
    path = Path(out)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sequence", "category"])
        writer.writerows(rows())
    print(f"wrote {path}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/emofed/data/emoji_categories.csv")
