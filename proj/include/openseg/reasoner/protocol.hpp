#pragma once

// Instruction texts and reply grammar for the reasoning conversation.
// The fixture chat mock keys on the same headers, so both sides include this.

#include <string_view>

namespace openseg::reasoner::protocol {

inline constexpr std::string_view kStep1Header = "Step 1: Describe the image.";
inline constexpr std::string_view kStep2Header = "Step 2: Identify the classes present.";
inline constexpr std::string_view kStep3Header = "Step 3: Explain each observed class.";
inline constexpr std::string_view kGenericHeader = "Generic class reasoning.";

inline constexpr std::string_view kStep1Body =
    "Write one paragraph that gives a high-level description of this image: the overall scene and its "
    "context, and the salient objects and regions in it.";

inline constexpr std::string_view kDescriptionLabel = "Image description:";
inline constexpr std::string_view kCandidatesLabel = "Candidate classes:";
inline constexpr std::string_view kStep2Body =
    "Using the image and the description above, decide which candidate classes are visible in the image. "
    "Only use names from the candidate list. Answer with a single line in exactly this form:\n"
    "classes: <name>; <name>; ...";

inline constexpr std::string_view kObservedLabel = "Observed classes:";
inline constexpr std::string_view kStep3Body =
    "For each observed class, give a coarse-to-fine reason that justifies its presence in the image: first a "
    "broad category, then a sub-category, then 3-5 fine-grained visual attributes that are visible in the image. "
    "Answer with exactly one line per class in this form:\n"
    "<class> | <broad category> | <sub-category> | <attribute>; <attribute>; <attribute>";

inline constexpr std::string_view kClassLabel = "Class:";
inline constexpr std::string_view kGenericBody =
    "Explain how this class is visually distinguishable from other classes, from coarse to fine: first its broad "
    "category, then its sub-category, then 3-5 discriminative visual attributes. Answer with exactly one line in "
    "this form:\n"
    "<class> | <broad category> | <sub-category> | <attribute>; <attribute>; <attribute>";

/// Step-2 reply: a line starting with this prefix, then ';'-separated names.
inline constexpr std::string_view kClassesPrefix = "classes:";
inline constexpr char kFieldSeparator = '|';
inline constexpr char kAttributeSeparator = ';';

} // namespace openseg::reasoner::protocol
