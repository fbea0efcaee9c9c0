#include "stu/types.hpp"

namespace stu {

std::string_view category_name(Category c) {
    switch (c) {
    case Category::grocery: return "Grocery";
    case Category::consume: return "Consume";
    case Category::sports: return "Sports";
    case Category::events: return "Events";
    case Category::dining: return "Dining";
    case Category::arts: return "Arts";
    case Category::religious: return "Religious";
    }
    return "?";
}

std::optional<Category> category_from_name(std::string_view name) {
    for (Category c : kCategories)
        if (category_name(c) == name)
            return c;
    return std::nullopt;
}

std::string per_user_column(std::optional<Category> c) {
    return "Per_User_STU_" + (c ? std::string(category_name(*c)) : std::string("all"));
}

std::string per_visit_column(std::optional<Category> c) {
    return "Per_Visit_STU_" + (c ? std::string(category_name(*c)) : std::string("all"));
}

} // namespace stu
