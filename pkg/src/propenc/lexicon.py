"""Small bundled word lists for the adjectival-phrase test and singularization.

Deterministic and auditable on purpose; no statistical tagger is involved.
"""

ADJECTIVES = frozenset("""
able active actual afraid alive angry annual available average awful bad
basic beautiful big bitter black blue bored bright broad brown busy calm
capable careful cheap chemical chief civil clean clear clever close cold
commercial common complete complex cool correct crazy critical cultural
curious cute dangerous dark dead deep dense different difficult dirty
distant domestic double dry dull eager early economic edible effective
efficient elderly electric electrical empty entire environmental equal
exact excellent exciting expensive fair false famous fast fat favorite
federal fellow female few final financial fine firm fit flat foreign
formal former fresh friendly front full fun funny future general gentle
giant glad global gold golden good gray great green gross guilty happy
hard healthy heavy high historical hollow honest hot huge human hungry
ill illegal important impossible independent individual industrial inner
intelligent interesting internal international joint junior key kind
large late lazy leading legal light likely little live lively local lone
long loose loud low lucky mad main major male mass massive mature mean
medical mental middle military minor mobile moral narrow national native
natural nearby neat negative nervous new nice normal northern odd official
okay old only open ordinary original outer overall pale past patient
perfect personal physical plain pleasant polite poor popular positive
possible powerful practical precious pregnant present pretty previous
primary prime private probable professional proper proud public pure
quick quiet rare raw ready real recent red regional regular related
relevant remote rich right rival rough round royal rural sad safe salty
same scared secret secure senior sensitive separate serious severe sharp
shiny short shy sick significant silent silly silver similar simple
single slight slow small smart smooth soft solid sore sorry southern
spare special specific spicy square stable standard steady steep sticky
still straight strange strict strong stupid sudden sufficient suitable
sweet tall technical temporary tender terrible thick thin tight tiny
tired top total tough traditional tropical true typical ugly unable
unfair unhappy unique unlikely upper upset urban used useful usual vast
violent visible vital warm weak wealthy weird western wet white whole
wide wild wise wonderful wooden working wrong yellow young
""".split())

# Tokens that disqualify a phrase from being adjectival outright.
DETERMINERS = frozenset("""
a an the this that these those some any each every no another such
my your his her its our their
""".split())

VERBS = frozenset("""
is are was were be been being am do does did done have has had having
can could will would shall should may might must go goes went gone make
makes made making get gets got take takes took use uses used contain
contains contained require requires required need needs needed become
becomes became eat eats ate grow grows grew live lives lived run runs
ran say says said see sees saw know knows knew think thinks thought
want wants wanted give gives gave find finds found tell tells told
call calls called help helps helped keep keeps kept
""".split())

# Final-token suffixes accepted by the adjectival test, plus two literal
# property markers that carry most of the hypernym-refinement signal.
ADJECTIVE_SUFFIXES = (
    "ous", "ful", "ive", "al", "ic", "able", "ible", "less", "ish", "y",
)
ADJECTIVE_LITERALS = frozenset({"rich", "free"})

# Common nouns whose endings collide with the adjectival suffix rules;
# these must stay classified as kinds (e.g. a lion is an animal).
NOUN_OVERRIDES = frozenset("""
animal mammal capital hospital material metal mineral crystal signal
journal festival interval carnival canal cereal funeral numeral petal
pedal portal rental sandal scandal terminal tribunal vegetable table
cable fable stable music magic logic topic clinic critic fabric garlic
picnic republic traffic mechanic medic attic relic detective executive
motive objective initiative perspective olive category city berry baby
body country family company history story party money entity activity
quality quantity energy century industry community university society
variety property county memory factory gallery grocery injury jury lady
library luxury machinery majority minority mystery poetry policy pony
puppy salary strategy summary surgery territory theory therapy treaty
valley victory army entry bakery battery economy embassy enemy fantasy
galaxy geography biology technology psychology anatomy academy agency
authority bounty butterfly candy ceremony colony controversy copy
delivery democracy discovery duty emergency identity laboratory melody
monastery observatory opportunity personality philosophy photography
publicity recovery remedy responsibility security sky toy boy guy day
way key
""".split())

IRREGULAR_PLURALS = {
    "children": "child",
    "feet": "foot",
    "geese": "goose",
    "lice": "louse",
    "men": "man",
    "mice": "mouse",
    "oxen": "ox",
    "people": "person",
    "teeth": "tooth",
    "women": "woman",
    "cacti": "cactus",
    "fungi": "fungus",
    "knives": "knife",
    "leaves": "leaf",
    "lives": "life",
    "loaves": "loaf",
    "wives": "wife",
    "wolves": "wolf",
}
