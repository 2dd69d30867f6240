#pragma once

// Word tables for the synthetic sentence grammar (internal to the library).

#include <array>
#include <string_view>

namespace advinfer::lexicon {

struct VerbForms {
  std::string_view s3;    // "throws"
  std::string_view base;  // "throw"
  std::string_view ing;   // "throwing"
};

// Each action has a primary wording and a paraphrase used by the second
// reference sentence.
struct Action {
  VerbForms primary;
  VerbForms paraphrase;
};

inline constexpr std::array<Action, 26> kActions = {{
    {{"throws", "throw", "throwing"}, {"tosses", "toss", "tossing"}},
    {{"kicks", "kick", "kicking"}, {"boots", "boot", "booting"}},
    {{"lifts", "lift", "lifting"}, {"raises", "raise", "raising"}},
    {{"paints", "paint", "painting"}, {"colors", "color", "coloring"}},
    {{"cuts", "cut", "cutting"}, {"slices", "slice", "slicing"}},
    {{"washes", "wash", "washing"}, {"rinses", "rinse", "rinsing"}},
    {{"rides", "ride", "riding"}, {"drives", "drive", "driving"}},
    {{"climbs", "climb", "climbing"}, {"scales", "scale", "scaling"}},
    {{"pushes", "push", "pushing"}, {"shoves", "shove", "shoving"}},
    {{"pulls", "pull", "pulling"}, {"drags", "drag", "dragging"}},
    {{"carries", "carry", "carrying"}, {"hauls", "haul", "hauling"}},
    {{"holds", "hold", "holding"}, {"grips", "grip", "gripping"}},
    {{"opens", "open", "opening"}, {"unlocks", "unlock", "unlocking"}},
    {{"drops", "drop", "dropping"}, {"releases", "release", "releasing"}},
    {{"catches", "catch", "catching"}, {"grabs", "grab", "grabbing"}},
    {{"swings", "swing", "swinging"}, {"waves", "wave", "waving"}},
    {{"mixes", "mix", "mixing"}, {"stirs", "stir", "stirring"}},
    {{"pours", "pour", "pouring"}, {"spills", "spill", "spilling"}},
    {{"sweeps", "sweep", "sweeping"}, {"brushes", "brush", "brushing"}},
    {{"folds", "fold", "folding"}, {"creases", "crease", "creasing"}},
    {{"wipes", "wipe", "wiping"}, {"cleans", "clean", "cleaning"}},
    {{"shakes", "shake", "shaking"}, {"jiggles", "jiggle", "jiggling"}},
    {{"hits", "hit", "hitting"}, {"strikes", "strike", "striking"}},
    {{"ties", "tie", "tying"}, {"knots", "knot", "knotting"}},
    {{"spins", "spin", "spinning"}, {"twirls", "twirl", "twirling"}},
    {{"fixes", "fix", "fixing"}, {"repairs", "repair", "repairing"}},
}};

// Optional leading movement joined with "and".
inline constexpr std::array<VerbForms, 5> kLeads = {{
    {"walks in", "walk in", "walking in"},
    {"stands up", "stand up", "standing up"},
    {"turns around", "turn around", "turning around"},
    {"kneels down", "kneel down", "kneeling down"},
    {"enters", "enter", "entering"},
}};

inline constexpr std::array<std::string_view, 100> kObjects = {{
    "ball",   "chair",    "table",  "rope",    "bike",   "box",    "bucket", "brush",
    "knife",  "bottle",   "cup",    "bowl",    "door",   "window", "car",    "horse",
    "board",  "kite",     "hammer", "towel",   "shirt",  "hat",    "bag",    "book",
    "paper",  "ladder",   "fence",  "tree",    "rock",   "stick",  "net",    "racket",
    "bat",    "glove",    "shoe",   "carpet",  "dish",   "pan",    "pot",    "plate",
    "spoon",  "fork",     "log",    "sail",    "boat",   "canoe",  "paddle", "drum",
    "guitar", "piano",    "violin", "flute",   "mirror", "lamp",   "pillow", "blanket",
    "tire",   "wheel",    "pole",   "bar",     "weight", "mat",    "frisbee", "dog",
    "cat",    "bread",    "cake",   "dough",   "egg",    "apple",  "lemon",  "orange",
    "carrot", "potato",   "onion",  "tomato",  "fish",   "flag",   "sign",   "camera",
    "phone",  "laptop",   "cone",   "hose",    "shovel", "rake",   "saw",    "drill",
    "brick",  "tile",     "vase",   "candle",  "toy",    "puzzle", "ring",   "sponge",
    "bench",  "umbrella", "basket", "scarf",
}};

// Ungrounded adverbials; never repeated within one reference paragraph.
inline constexpr std::array<std::string_view, 14> kModifiers = {{
    "in a large room",
    "on a sunny day",
    "in front of a crowd",
    "while others watch",
    "several times",
    "very slowly",
    "with great care",
    "near the wall",
    "outside on the grass",
    "in the living room",
    "at the same time",
    "for a while",
    "on the street",
    "in the kitchen",
}};

// Actor nouns indexed by [gender][plurality][variant].
inline constexpr std::string_view kActorWords[3][2][3] = {
    {{"man", "guy", "boy"}, {"men", "guys", "boys"}},
    {{"woman", "lady", "girl"}, {"women", "ladies", "girls"}},
    {{"person", "child", "kid"}, {"people", "children", "kids"}},
};

}  // namespace advinfer::lexicon
